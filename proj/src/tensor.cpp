#include "smt/tensor.hpp"

#include <sstream>

#include "smt/error.hpp"

namespace smt {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), values(shape_size(shape), Real{0}) {}

Tensor::Tensor(Shape s, std::vector<Real> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
}

Tensor Tensor::filled(Shape s, Real value) {
  Tensor t(std::move(s));
  for (auto& v : t.values) v = value;
  return t;
}

}  // namespace smt
