#include "mscl/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "mscl/error.hpp"

namespace mscl {

GrayImage GrayImage::filled(std::size_t width, std::size_t height, double value) {
  return GrayImage{width, height, std::vector<double>(width * height, value)};
}

void GrayImage::validate() const {
  if (width == 0 || height == 0) throw EmptyInputError("image has zero size");
  if (pixels.size() != width * height) {
    throw InputError("image buffer holds " + std::to_string(pixels.size()) + " pixels, expected " +
                     std::to_string(width * height));
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("image intensity outside [0, 1]");
  }
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

GrayImage read_png(const std::filesystem::path &path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  GrayImage out{img.width, img.height, std::vector<double>(buffer.size())};
  for (std::size_t i = 0; i < buffer.size(); ++i) out.pixels[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path &path, const GrayImage &image) {
  image.validate();
  std::vector<std::uint8_t> buffer(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), to_byte);
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

GrayImage quantize8(const GrayImage &image) {
  GrayImage out = image;
  for (auto &v : out.pixels) v = to_byte(v) / 255.0;
  return out;
}

}  // namespace mscl
