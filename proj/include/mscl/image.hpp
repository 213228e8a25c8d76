#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mscl {

// Row-major grayscale intensities in [0, 1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  static GrayImage filled(std::size_t width, std::size_t height, double value);

  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  double &at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }

  // Throws InputError when the size or value-range invariants do not hold.
  void validate() const;

  bool operator==(const GrayImage &) const = default;
};

// 8-bit grayscale PNG; intensity i maps to i/255. Color inputs are converted
// to gray by libpng.
GrayImage read_png(const std::filesystem::path &path);
void write_png(const std::filesystem::path &path, const GrayImage &image);

// Quantizes to the 8-bit grid used on disk.
GrayImage quantize8(const GrayImage &image);

}  // namespace mscl
