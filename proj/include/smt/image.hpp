#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "smt/tensor.hpp"

namespace smt {

/// Interleaved H x W x C image, row-major, values in [0, 1] once loaded.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<Real> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), pixels(h * w * c, Real{0}) {}

  Real& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  Real at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

/// 8-bit image as stored on disk.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> data;
};

/// Reads a binary PPM (P6, maxval <= 255). Throws IoError / FormatError.
RawImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RawImage& image);
/// Writes an 8-bit grayscale PGM (P5); `image.channels` must be 1.
void write_pgm(const std::string& path, const RawImage& image);
RawImage read_pgm(const std::string& path);

/// Bilinear resampling with half-pixel centres (edges clamped).
/// Same-size input is returned unchanged.
Image resize_bilinear(const Image& src, std::size_t out_height, std::size_t out_width);

/// Scales 8-bit samples by 1/255.
Image to_unit_range(const RawImage& raw);

/// read_ppm + to_unit_range + resize_bilinear.
Image load_image(const std::string& path, std::size_t out_height = 224, std::size_t out_width = 224);

}  // namespace smt
