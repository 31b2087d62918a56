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
#include "ccda/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ccda/image_io.hpp"
#include "ccda/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ccda {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);  // wrap into [0,1)
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Shape {
  int kind;  // 0 circle, 1 rectangle, 2 triangle
  int cls;
  double cx, cy, radius, aspect;
  Rgb color;
};

bool shape_contains(const Shape& s, double x, double y) {
  const double dx = x - s.cx;
  const double dy = y - s.cy;
  switch (s.kind) {
    case 0:
      return dx * dx + dy * dy <= s.radius * s.radius;
    case 1:
      return std::fabs(dx) <= s.radius * s.aspect && std::fabs(dy) <= s.radius / s.aspect;
    default: {
      // upward triangle inscribed in the radius
      const double h = s.radius * 1.5;
      const double top = s.cy - s.radius;
      if (y < top || y > top + h) return false;
      const double half = s.radius * (y - top) / h;
      return std::fabs(dx) <= half;
    }
  }
}

// rarer classes get smaller power-law weight; class C-1 is the rarest
int sample_shape_class(Rng& rng, int num_classes, double skew) {
  const int k = num_classes - 1;
  std::vector<double> cum(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int c = 1; c < num_classes; ++c) {
    total += std::pow(static_cast<double>(c), -skew);
    cum[static_cast<std::size_t>(c - 1)] = total;
  }
  const double u = rng.uniform() * total;
  for (int c = 1; c < num_classes; ++c) {
    if (u <= cum[static_cast<std::size_t>(c - 1)]) return c;
  }
  return num_classes - 1;
}

// distinct, well separated hue per class keeps the benchmark learnable
double class_hue(int cls, int num_classes) {
  return 0.83 * static_cast<double>(cls - 1) / std::max(1, num_classes - 1);
}

void apply_shift(Tensor& img, const DomainShiftSpec& shift, Rng& rng) {
  const int h = img.dim(0), w = img.dim(1);
  if (shift.hue_rotation_deg != 0.0) {
    // rotation about the gray diagonal of RGB space
    const double th = shift.hue_rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double a = c + (1.0 - c) / 3.0;
    const double b1 = (1.0 - c) / 3.0 - s / std::sqrt(3.0);
    const double b2 = (1.0 - c) / 3.0 + s / std::sqrt(3.0);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double r = img.at(i, j, 0), g = img.at(i, j, 1), b = img.at(i, j, 2);
        img.at(i, j, 0) = a * r + b1 * g + b2 * b;
        img.at(i, j, 1) = b2 * r + a * g + b1 * b;
        img.at(i, j, 2) = b1 * r + b2 * g + a * b;
      }
    }
  }
  if (shift.contrast_scale != 1.0) {
    for (std::int64_t i = 0; i < img.size(); ++i) {
      img[i] = (img[i] - 0.5) * shift.contrast_scale + 0.5;
    }
  }
  if (shift.brightness_offset != 0.0) {
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] += shift.brightness_offset;
  }
  if (shift.texture_frequency != 0.0) {
    const double f = shift.texture_frequency;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double v =
            0.08 * std::sin(2.0 * std::numbers::pi * f * (i + j) / static_cast<double>(w));
        for (int k = 0; k < 3; ++k) img.at(i, j, k) += v;
      }
    }
  }
  if (shift.noise_stddev != 0.0) {
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] += shift.noise_stddev * rng.normal();
  }
}

std::string sample_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", i);
  return buf;
}

[[noreturn]] void dataset_error(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

}  // namespace

void validate_scene_spec(const SceneSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("scene: num_classes must be >= 2");
  if (spec.image_height < 32 || spec.image_width < 32) {
    throw std::invalid_argument("scene: image sides must be >= 32");
  }
  if (spec.image_height % kEncoderStride != 0 || spec.image_width % kEncoderStride != 0) {
    throw std::invalid_argument("scene: image sides must be divisible by the encoder stride " +
                                std::to_string(kEncoderStride));
  }
  if (spec.class_frequency_skew < 0.0) throw std::invalid_argument("scene: skew must be >= 0");
  if (spec.shapes_min < 0 || spec.shapes_max < spec.shapes_min) {
    throw std::invalid_argument("scene: bad shapes_min/shapes_max range");
  }
}

Sample render_sample(const SceneSpec& spec, const DomainShiftSpec& shift, std::uint64_t index) {
  const int h = spec.image_height, w = spec.image_width;
  const int c = spec.num_classes;
  const std::uint64_t sample_seed = spec.seed ^ index;
  Rng scene_rng(derive_seed(sample_seed, 0));

  // background: low-saturation color with a smooth two-sine luminance field
  const double bg_hue = scene_rng.uniform();
  const double fx = scene_rng.uniform(1.0, 3.0);
  const double fy = scene_rng.uniform(1.0, 3.0);
  const double px = scene_rng.uniform(0.0, 1.0);
  const double py = scene_rng.uniform(0.0, 1.0);

  const int n_shapes =
      spec.shapes_min +
      (spec.shapes_max > spec.shapes_min ? scene_rng.uniform_int(spec.shapes_max - spec.shapes_min + 1)
                                         : 0);
  std::vector<Shape> shapes(static_cast<std::size_t>(n_shapes));
  const double min_dim = std::min(h, w);
  for (auto& s : shapes) {
    s.cls = sample_shape_class(scene_rng, c, spec.class_frequency_skew);
    s.kind = scene_rng.uniform_int(3);
    s.radius = min_dim * scene_rng.uniform(0.10, 0.24);
    s.cx = scene_rng.uniform(s.radius, w - s.radius);
    s.cy = scene_rng.uniform(s.radius, h - s.radius);
    s.aspect = scene_rng.uniform(0.7, 1.4);
    const double hue = class_hue(s.cls, c) + scene_rng.uniform(-0.03, 0.03);
    const double sat = 0.85 + scene_rng.uniform(-0.08, 0.08);
    const double val = 0.80 + scene_rng.uniform(-0.12, 0.12);
    s.color = hsv_to_rgb(hue, sat, val);
  }

  Sample out;
  out.image = Tensor({h, w, 3});
  out.labels = Tensor({h, w});
  out.has_labels = true;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double lum =
          0.45 + 0.10 * std::sin(2.0 * std::numbers::pi * (fx * j / w + px)) *
                     std::sin(2.0 * std::numbers::pi * (fy * i / h + py));
      Rgb col = hsv_to_rgb(bg_hue, 0.15, lum);
      int cls = 0;
      // later shapes draw over earlier ones
      for (const auto& s : shapes) {
        if (shape_contains(s, j + 0.5, i + 0.5)) {
          col = s.color;
          cls = s.cls;
        }
      }
      out.image.at(i, j, 0) = col.r;
      out.image.at(i, j, 1) = col.g;
      out.image.at(i, j, 2) = col.b;
      out.labels.at(i, j) = static_cast<double>(cls);
    }
  }

  Rng shift_rng(derive_seed(sample_seed, 1));
  apply_shift(out.image, shift, shift_rng);
  for (std::int64_t i = 0; i < out.image.size(); ++i) {
    out.image[i] = quantize8(std::clamp(out.image[i], 0.0, 1.0));
  }
  return out;
}

Dataset generate_domain(const SceneSpec& spec, const DomainShiftSpec& shift, int n) {
  return generate_domain(spec, shift, {{"train", n}});
}

Dataset generate_domain(const SceneSpec& spec, const DomainShiftSpec& shift,
                        const std::vector<std::pair<std::string, int>>& split_sizes) {
  validate_scene_spec(spec);
  if (split_sizes.empty()) {
    throw std::invalid_argument("generate_domain: need at least one split");
  }
  Dataset d;
  d.scene = spec;
  d.shift = shift;
  int next = 0;
  for (const auto& [name, n] : split_sizes) {
    if (name.empty()) throw std::invalid_argument("generate_domain: empty split name");
    if (n < 1) {
      throw std::invalid_argument("generate_domain: split '" + name + "' must have >= 1 sample");
    }
    if (d.splits.count(name) != 0) {
      throw std::invalid_argument("generate_domain: duplicate split '" + name + "'");
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i, ++next) {
      d.samples.push_back(render_sample(spec, shift, static_cast<std::uint64_t>(next)));
      idx[static_cast<std::size_t>(i)] = next;
    }
    d.splits[name] = std::move(idx);
  }
  return d;
}

std::string write_dataset(const Dataset& dataset, const std::string& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) dataset_error("cannot create dataset directory", root);

  json manifest;
  manifest["format"] = "ccda-dataset-v1";
  manifest["num_classes"] = dataset.scene.num_classes;
  manifest["image_height"] = dataset.scene.image_height;
  manifest["image_width"] = dataset.scene.image_width;
  manifest["scene"] = {{"image_height", dataset.scene.image_height},
                       {"image_width", dataset.scene.image_width},
                       {"num_classes", dataset.scene.num_classes},
                       {"class_frequency_skew", dataset.scene.class_frequency_skew},
                       {"shapes_min", dataset.scene.shapes_min},
                       {"shapes_max", dataset.scene.shapes_max},
                       {"seed", dataset.scene.seed}};
  manifest["shift"] = {{"brightness_offset", dataset.shift.brightness_offset},
                       {"contrast_scale", dataset.shift.contrast_scale},
                       {"hue_rotation_deg", dataset.shift.hue_rotation_deg},
                       {"noise_stddev", dataset.shift.noise_stddev},
                       {"texture_frequency", dataset.shift.texture_frequency}};

  json splits = json::object();
  for (const auto& [name, indices] : dataset.splits) {
    fs::create_directories(fs::path(root) / "images" / name, ec);
    fs::create_directories(fs::path(root) / "labels" / name, ec);
    if (ec) dataset_error("cannot create split directory", (fs::path(root) / name).string());
    json ids = json::array();
    for (int i : indices) {
      const Sample& s = dataset.samples.at(static_cast<std::size_t>(i));
      const std::string id = sample_id(i);
      write_png_rgb8((fs::path(root) / "images" / name / (id + ".png")).string(), s.image);
      if (s.has_labels) {
        write_png_gray8((fs::path(root) / "labels" / name / (id + ".png")).string(), s.labels);
      }
      ids.push_back(id);
    }
    splits[name] = std::move(ids);
  }
  manifest["splits"] = std::move(splits);

  const std::string manifest_path = (fs::path(root) / "manifest.json").string();
  std::ofstream out(manifest_path);
  if (!out) dataset_error("cannot open manifest for writing", manifest_path);
  out << manifest.dump(2) << "\n";
  if (!out.flush()) dataset_error("failed writing manifest", manifest_path);
  return manifest_path;
}

Dataset read_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) dataset_error("manifest not found", manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    dataset_error(std::string("corrupt manifest (") + e.what() + ")", manifest_path);
  }
  if (manifest.value("format", "") != "ccda-dataset-v1") {
    dataset_error("unrecognized dataset format", manifest_path);
  }

  Dataset d;
  try {
    const json& sc = manifest.at("scene");
    d.scene.image_height = sc.at("image_height").get<int>();
    d.scene.image_width = sc.at("image_width").get<int>();
    d.scene.num_classes = sc.at("num_classes").get<int>();
    d.scene.class_frequency_skew = sc.at("class_frequency_skew").get<double>();
    d.scene.shapes_min = sc.at("shapes_min").get<int>();
    d.scene.shapes_max = sc.at("shapes_max").get<int>();
    d.scene.seed = sc.at("seed").get<std::uint64_t>();
    const json& sh = manifest.at("shift");
    d.shift.brightness_offset = sh.at("brightness_offset").get<double>();
    d.shift.contrast_scale = sh.at("contrast_scale").get<double>();
    d.shift.hue_rotation_deg = sh.at("hue_rotation_deg").get<double>();
    d.shift.noise_stddev = sh.at("noise_stddev").get<double>();
    d.shift.texture_frequency = sh.at("texture_frequency").get<double>();
  } catch (const json::exception& e) {
    dataset_error(std::string("corrupt manifest (") + e.what() + ")", manifest_path);
  }

  const fs::path root = fs::path(manifest_path).parent_path();
  const int c = d.scene.num_classes;
  for (const auto& [name, ids] : manifest.at("splits").items()) {
    std::vector<int> indices;
    for (const auto& id_json : ids) {
      const std::string id = id_json.get<std::string>();
      const fs::path img_path = root / "images" / name / (id + ".png");
      const fs::path lbl_path = root / "labels" / name / (id + ".png");
      if (!fs::exists(img_path)) dataset_error("missing image raster", img_path.string());
      Sample s;
      s.image = read_png_rgb8(img_path.string());
      if (s.image.dim(0) != d.scene.image_height || s.image.dim(1) != d.scene.image_width) {
        dataset_error("raster size disagrees with manifest", img_path.string());
      }
      if (fs::exists(lbl_path)) {
        s.labels = read_png_gray8(lbl_path.string());
        s.has_labels = true;
        if (!s.labels.same_shape(Tensor({d.scene.image_height, d.scene.image_width}))) {
          dataset_error("label raster size disagrees with manifest", lbl_path.string());
        }
        for (std::int64_t i = 0; i < s.labels.size(); ++i) {
          const int v = static_cast<int>(s.labels[i]);
          if (v != kIgnoreLabel && v >= c) {
            dataset_error("label value " + std::to_string(v) + " out of range in",
                          lbl_path.string());
          }
        }
      }
      indices.push_back(static_cast<int>(d.samples.size()));
      d.samples.push_back(std::move(s));
    }
    d.splits[name] = std::move(indices);
  }
  return d;
}

std::vector<std::int64_t> class_pixel_counts(const Dataset& dataset, const std::string& split) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(dataset.scene.num_classes), 0);
  auto tally = [&](const Sample& s) {
    if (!s.has_labels) return;
    for (std::int64_t i = 0; i < s.labels.size(); ++i) {
      const int v = static_cast<int>(s.labels[i]);
      if (v != kIgnoreLabel) ++counts[static_cast<std::size_t>(v)];
    }
  };
  if (split.empty()) {
    for (const auto& s : dataset.samples) tally(s);
  } else {
    auto it = dataset.splits.find(split);
    if (it == dataset.splits.end()) {
      throw std::invalid_argument("class_pixel_counts: no split named '" + split + "'");
    }
    for (int i : it->second) tally(dataset.samples.at(static_cast<std::size_t>(i)));
  }
  return counts;
}

}  // namespace ccda
