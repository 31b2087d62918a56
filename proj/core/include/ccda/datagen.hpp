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
#ifndef CCDA_DATAGEN_HPP_
#define CCDA_DATAGEN_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccda/tensor.hpp"

namespace ccda {

// class index used in label maps for pixels that must not be scored
inline constexpr int kIgnoreLabel = 255;

// total downsampling of the feature encoder; image sizes must divide by it
inline constexpr int kEncoderStride = 8;

// Procedural scene process: colored geometric shapes on a textured
// background. Shape classes are 1..C-1 (class 0 is background) and are drawn
// from a power law so higher class indices are rarer.
struct SceneSpec {
  int image_height = 64;
  int image_width = 64;
  int num_classes = 5;
  double class_frequency_skew = 1.5;
  int shapes_min = 4;
  int shapes_max = 8;
  std::uint64_t seed = 0;
};

// Appearance-only transform applied after rendering; the all-identity
// default leaves the rendering bit-exact and never touches label maps.
struct DomainShiftSpec {
  double brightness_offset = 0.0;
  double contrast_scale = 1.0;
  double hue_rotation_deg = 0.0;
  double noise_stddev = 0.0;
  double texture_frequency = 0.0;  // cycles per image width; 0 disables
};

struct Sample {
  Tensor image;        // HxWx3 in [0,1], quantized to the 8-bit grid
  Tensor labels;       // HxW class indices; empty when withheld
  bool has_labels = false;
};

struct Dataset {
  SceneSpec scene;
  DomainShiftSpec shift;
  std::vector<Sample> samples;
  // split name -> indices into samples
  std::map<std::string, std::vector<int>> splits;
};

void validate_scene_spec(const SceneSpec& spec);

// Renders sample i of a domain; pure function of (spec, shift, spec.seed^i).
Sample render_sample(const SceneSpec& spec, const DomainShiftSpec& shift, std::uint64_t index);

// n samples in one "train" split; identical spec+shift+seed give an
// identical dataset, and two shifts over one spec share label maps exactly.
Dataset generate_domain(const SceneSpec& spec, const DomainShiftSpec& shift, int n);

// named splits rendered consecutively from one index stream, e.g.
// {{"train", 200}, {"val", 50}}
Dataset generate_domain(const SceneSpec& spec, const DomainShiftSpec& shift,
                        const std::vector<std::pair<std::string, int>>& split_sizes);

// Directory layout under root: manifest.json, images/{split}/{id}.png,
// labels/{split}/{id}.png. Returns the manifest path. Reading validates the
// manifest and every raster (label values must be < C or the ignore value)
// and reports offending paths.
std::string write_dataset(const Dataset& dataset, const std::string& root);
Dataset read_dataset(const std::string& manifest_path);

// per-class pixel counts over the labeled samples of a split ("" = all)
std::vector<std::int64_t> class_pixel_counts(const Dataset& dataset, const std::string& split);

}  // namespace ccda

#endif  // CCDA_DATAGEN_HPP_
