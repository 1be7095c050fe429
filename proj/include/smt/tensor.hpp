#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace smt {

/// Scalar type of every tensor. 64-bit so gradient checks stay meaningful.
using Real = double;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer.
///
/// `grad` is either empty (absent) or has exactly `values.size()` entries.
struct Tensor {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<Real> v);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor filled(Shape s, Real value);
  static Tensor scalar(Real value) { return Tensor({1}, {value}); }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  /// Extent of the last dimension.
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  /// Product of all leading dimensions.
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  Real& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad.assign(values.size(), Real{0}); }
  void clear_grad() { grad.clear(); }

  std::span<const Real> view() const { return values; }
};

}  // namespace smt
