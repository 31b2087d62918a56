/* Copyright 2026 The CCDA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "ccda/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace ccda {

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path, const png_image& img) {
  throw std::runtime_error(what + " '" + path + "': " + img.message);
}

std::vector<unsigned char> to_bytes(const Tensor& t) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(t.size()));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double v = t[i];
    const double scaled = std::round(v * 255.0);
    if (!(scaled >= 0.0 && scaled <= 255.0)) {
      throw std::invalid_argument("pixel value out of [0,1] range: " + std::to_string(v));
    }
    bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(scaled);
  }
  return bytes;
}

void write_png(const std::string& path, const unsigned char* bytes, int h, int w, bool rgb) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes, 0, nullptr)) {
    fail("failed to write PNG", path, img);
  }
}

std::vector<unsigned char> read_png(const std::string& path, int* h, int* w, bool rgb) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail("failed to read PNG", path, img);
  }
  img.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    fail("failed to decode PNG", path, img);
  }
  *h = static_cast<int>(img.height);
  *w = static_cast<int>(img.width);
  return bytes;
}

}  // namespace

double quantize8(double v) { return std::round(v * 255.0) / 255.0; }

void write_png_rgb8(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw std::invalid_argument("write_png_rgb8: HxWx3 tensor expected, got " + image.shape_str());
  }
  const auto bytes = to_bytes(image);
  write_png(path, bytes.data(), image.dim(0), image.dim(1), /*rgb=*/true);
}

Tensor read_png_rgb8(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png(path, &h, &w, /*rgb=*/true);
  Tensor t({h, w, 3});
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = bytes[static_cast<std::size_t>(i)] / 255.0;
  }
  return t;
}

void write_png_gray8(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) {
    throw std::invalid_argument("write_png_gray8: HxW tensor expected, got " + map.shape_str());
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(map.size()));
  for (std::int64_t i = 0; i < map.size(); ++i) {
    const double v = map[i];
    if (v != std::floor(v) || v < 0.0 || v > 255.0) {
      throw std::invalid_argument("label value must be an integer in [0,255], got " +
                                  std::to_string(v));
    }
    bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v);
  }
  write_png(path, bytes.data(), map.dim(0), map.dim(1), /*rgb=*/false);
}

Tensor read_png_gray8(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png(path, &h, &w, /*rgb=*/false);
  Tensor t({h, w});
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]);
  }
  return t;
}

}  // namespace ccda
