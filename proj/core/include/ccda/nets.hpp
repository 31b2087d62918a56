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
#ifndef CCDA_NETS_HPP_
#define CCDA_NETS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccda/autodiff.hpp"
#include "ccda/rng.hpp"
#include "ccda/tensor.hpp"

namespace ccda {

struct EncoderSpec {
  int in_channels = 3;
  int feature_channels = 64;
  int stride = 8;  // total downsampling; must be a power of two
  int depth = 4;   // conv blocks; the first log2(stride) blocks downsample
};

struct DiscSpec {
  // the fine branch runs all of fine_channels; the coarse branch shares the
  // first shared_prefix_layers of them, then runs coarse_tail_channels,
  // whose last entry must be 2*C
  std::vector<int> fine_channels = {64, 128, 256, 512, 1};
  std::vector<int> coarse_tail_channels = {256, 512, -1};  // -1: filled with 2*C
  int shared_prefix_layers = 2;
  double leaky_slope = 0.2;
  int fine_kernel = 3;
  int fine_stride = 1;
  int coarse_kernel = 3;
  int coarse_stride = 2;
};

// returns the spec with the final coarse channel materialized as 2*C
DiscSpec finalize_disc_spec(DiscSpec spec, int num_classes);

bool operator==(const EncoderSpec& a, const EncoderSpec& b);
bool operator==(const DiscSpec& a, const DiscSpec& b);

struct ConvLayer {
  ad::Var weight;  // kh x kw x cin x cout
  ad::Var bias;    // cout
  int stride = 1;
  int pad = 1;
};

struct Encoder {
  EncoderSpec spec;
  std::vector<ConvLayer> blocks;
};

// Decodes stride-S features to per-pixel class probabilities: a 3x3 mixing
// conv, a 1x1 projection to C*(S/2)^2 channels, a block shuffle to stride-2
// logits, a final bilinear 2x upsample, then a per-pixel softmax.
struct SegHead {
  int num_classes = 0;
  int detail = 4;  // block-shuffle factor, encoder stride / 2
  ConvLayer mix;
  ConvLayer project;
};

struct Discriminator {
  DiscSpec spec;
  int num_classes = 0;
  std::vector<ConvLayer> fine;         // all fine-branch layers
  std::vector<ConvLayer> coarse_tail;  // layers after the shared prefix
};

struct Models {
  EncoderSpec encoder_spec;
  DiscSpec disc_spec;
  int num_classes = 0;
  Encoder encoder;
  SegHead seg_head;
  Discriminator disc;
};

Encoder make_encoder(const EncoderSpec& spec, Rng& rng);
SegHead make_seg_head(int feature_channels, int num_classes, int encoder_stride, Rng& rng);
Discriminator make_discriminator(const DiscSpec& spec, int in_channels, int num_classes, Rng& rng);
Models make_models(const EncoderSpec& enc, const DiscSpec& disc, int num_classes,
                   std::uint64_t seed);

// image HxWx3 -> feature (H/stride)x(W/stride)xF; H,W must divide by stride
ad::Var encode(const Encoder& enc, const Tensor& image);

// feature -> HxWxC probability map (rows sum to 1)
ad::Var segment(const SegHead& head, const ad::Var& feature, int encoder_stride);

struct DiscOutput {
  ad::Var fine_scores;  // HxW sigmoid scores, upsampled to image size
  ad::Var coarse_raw;   // rows x cols x 2C raw scores; undefined if skipped
};
// with_coarse=false skips the coarse tail (ablation rows without it)
DiscOutput discriminate(const Discriminator& disc, const ad::Var& feature, int image_h,
                        int image_w, bool with_coarse);

// --- parameters ---------------------------------------------------------------

struct NamedParam {
  std::string name;
  ad::Var var;
};

std::vector<NamedParam> encoder_params(Encoder& enc);
std::vector<NamedParam> seg_head_params(SegHead& head);
std::vector<NamedParam> disc_params(Discriminator& disc);
// "encoder.*" + "seg_head.*" + "disc.*"
std::vector<NamedParam> all_params(Models& m);

void set_trainable(const std::vector<NamedParam>& params, bool trainable);

// --- checkpoints ----------------------------------------------------------------

struct Checkpoint {
  Models models;
  std::int64_t step = 0;
  std::map<std::string, Tensor> extra;  // optimizer buffers etc.
};

void save_checkpoint(const std::string& path, Models& models, std::int64_t step,
                     const std::map<std::string, Tensor>& extra);
// rebuilds the models from the stored specs and loads every array; rejects
// unknown versions and any spec/shape mismatch
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ccda

#endif  // CCDA_NETS_HPP_
