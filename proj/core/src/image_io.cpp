#include "sggan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace sggan {
namespace {

struct PngPixels {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bytes;
};

PngPixels read_png(const std::string& path, png_uint_32 format) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("file not found: " + path);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("malformed PNG " + path + ": " + image.message);
  }
  image.format = format;
  PngPixels px;
  px.height = image.height;
  px.width = image.width;
  px.bytes.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("malformed PNG " + path + ": " + image.message);
  }
  return px;
}

void write_png(const std::string& path, png_uint_32 format, std::size_t h, std::size_t w,
               const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path + ": " + image.message);
  }
}

}  // namespace

void save_image(const std::string& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("save_image expects (1, 3, H, W), got " + s.str());
  std::vector<std::uint8_t> bytes(s.h * s.w * 3);
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), -1.0f, 1.0f);
        bytes[(y * s.w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0f) * 127.5f));
      }
    }
  }
  write_png(path, PNG_FORMAT_RGB, s.h, s.w, bytes);
}

Tensor load_image(const std::string& path) {
  PngPixels px = read_png(path, PNG_FORMAT_RGB);
  Tensor t({1, 3, px.height, px.width});
  for (std::size_t y = 0; y < px.height; ++y) {
    for (std::size_t x = 0; x < px.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        t.at(0, c, y, x) = static_cast<float>(px.bytes[(y * px.width + x) * 3 + c]) / 127.5f - 1.0f;
      }
    }
  }
  return t;
}

void save_labels(const std::string& path, const LabelMap& labels) {
  if (labels.batch() != 1) throw ShapeError("save_labels expects a single label map");
  if (labels.num_classes() > 256) throw std::invalid_argument("save_labels: more than 256 classes");
  std::vector<std::uint8_t> bytes(labels.values().begin(), labels.values().end());
  write_png(path, PNG_FORMAT_GRAY, labels.height(), labels.width(), bytes);
}

LabelMap load_labels(const std::string& path, int num_classes) {
  PngPixels px = read_png(path, PNG_FORMAT_GRAY);
  std::vector<std::int32_t> values(px.bytes.begin(), px.bytes.end());
  for (std::int32_t v : values) {
    if (v >= num_classes) {
      throw std::out_of_range(path + ": label value " + std::to_string(v) + " >= num_classes " +
                              std::to_string(num_classes));
    }
  }
  return LabelMap(1, px.height, px.width, num_classes, std::move(values));
}

}  // namespace sggan
