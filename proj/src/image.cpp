#include "smt/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "smt/error.hpp"

namespace smt {
namespace {

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

// Netpbm header tokenizer: whitespace separated, '#' comments to end of line.
class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
      out.push_back(static_cast<char>(bytes_[pos_++]));
    }
    if (out.empty()) throw FormatError("truncated header in '" + path_ + "'");
    return out;
  }

  std::size_t number() {
    const std::string t = token();
    std::size_t value = 0;
    for (char c : t) {
      if (c < '0' || c > '9') throw FormatError("bad header field '" + t + "' in '" + path_ + "'");
      value = value * 10 + static_cast<std::size_t>(c - '0');
      if (value > (1u << 24)) throw FormatError("header value too large in '" + path_ + "'");
    }
    return value;
  }

  /// Consumes the single whitespace byte that ends the header.
  std::size_t data_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("truncated header in '" + path_ + "'");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

RawImage read_netpbm(const std::string& path, const char* magic, std::size_t channels) {
  const auto bytes = slurp(path);
  HeaderReader header(bytes, path);
  if (header.token() != magic) {
    throw FormatError("'" + path + "' is not a " + std::string(magic) + " image");
  }
  RawImage img;
  img.width = header.number();
  img.height = header.number();
  const std::size_t maxval = header.number();
  if (img.width == 0 || img.height == 0) throw FormatError("empty image '" + path + "'");
  if (maxval == 0 || maxval > 255) {
    throw FormatError("'" + path + "': only 8-bit samples are supported (maxval " +
                      std::to_string(maxval) + ")");
  }
  img.channels = channels;
  const std::size_t offset = header.data_offset();
  const std::size_t n = img.width * img.height * channels;
  if (bytes.size() < offset + n) throw FormatError("truncated pixel data in '" + path + "'");
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(offset + n));
  if (maxval != 255) {
    for (auto& v : img.data) {
      v = static_cast<std::uint8_t>(std::lround(255.0 * std::min<std::size_t>(v, maxval) / maxval));
    }
  }
  return img;
}

void write_netpbm(const std::string& path, const RawImage& image, const char* magic,
                  std::size_t channels) {
  if (image.channels != channels || image.data.size() != image.width * image.height * channels) {
    throw DimensionError("write " + std::string(magic) + ": image has wrong channel count or size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out << magic << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
  if (!out) throw IoError("failed writing image '" + path + "'");
}

}  // namespace

RawImage read_ppm(const std::string& path) { return read_netpbm(path, "P6", 3); }
RawImage read_pgm(const std::string& path) { return read_netpbm(path, "P5", 1); }
void write_ppm(const std::string& path, const RawImage& image) { write_netpbm(path, image, "P6", 3); }
void write_pgm(const std::string& path, const RawImage& image) { write_netpbm(path, image, "P5", 1); }

Image to_unit_range(const RawImage& raw) {
  Image img(raw.height, raw.width, raw.channels);
  for (std::size_t i = 0; i < raw.data.size(); ++i) img.pixels[i] = raw.data[i] / Real{255};
  return img;
}

Image resize_bilinear(const Image& src, std::size_t out_height, std::size_t out_width) {
  if (out_height == 0 || out_width == 0) throw DimensionError("resize_bilinear: empty target size");
  if (src.height == out_height && src.width == out_width) return src;

  Image dst(out_height, out_width, src.channels);
  const Real sy = static_cast<Real>(src.height) / static_cast<Real>(out_height);
  const Real sx = static_cast<Real>(src.width) / static_cast<Real>(out_width);

  struct Tap {
    std::size_t i0, i1;
    Real w1;
  };
  auto taps = [](std::size_t n_out, std::size_t n_in, Real scale) {
    std::vector<Tap> out(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      Real pos = (static_cast<Real>(o) + Real{0.5}) * scale - Real{0.5};
      pos = std::clamp(pos, Real{0}, static_cast<Real>(n_in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(pos));
      const std::size_t i1 = std::min(i0 + 1, n_in - 1);
      out[o] = {i0, i1, pos - static_cast<Real>(i0)};
    }
    return out;
  };
  const auto ty = taps(out_height, src.height, sy);
  const auto tx = taps(out_width, src.width, sx);

  for (std::size_t y = 0; y < out_height; ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      for (std::size_t c = 0; c < src.channels; ++c) {
        const Real top = src.at(ty[y].i0, tx[x].i0, c) * (1 - tx[x].w1) + src.at(ty[y].i0, tx[x].i1, c) * tx[x].w1;
        const Real bot = src.at(ty[y].i1, tx[x].i0, c) * (1 - tx[x].w1) + src.at(ty[y].i1, tx[x].i1, c) * tx[x].w1;
        dst.at(y, x, c) = top * (1 - ty[y].w1) + bot * ty[y].w1;
      }
    }
  }
  return dst;
}

Image load_image(const std::string& path, std::size_t out_height, std::size_t out_width) {
  return resize_bilinear(to_unit_range(read_ppm(path)), out_height, out_width);
}

}  // namespace smt
