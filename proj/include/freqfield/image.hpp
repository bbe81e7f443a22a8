#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace freqfield {

/// Linear RGB image, row-major, values nominally in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;  // height * width * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), data(w * h * 3, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return data[(y * width + x) * 3 + c];
  }
  void set(std::size_t x, std::size_t y, const std::array<double, 3>& rgb) {
    for (std::size_t c = 0; c < 3; ++c) at(x, y, c) = rgb[c];
  }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

/// 8-bit RGB PNG. Values are clamped to [0,1] and stored as round(255 v);
/// no transfer function is applied.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// 8-bit grayscale PNG from a row-major buffer, min-max normalized to
/// [0, 255] (a constant buffer maps to 0).
void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<double>& values);

}  // namespace freqfield
