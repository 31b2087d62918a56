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
#include "ccda/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

namespace ccda {

namespace {

using nlohmann::json;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  return k;
}

void validate_encoder_spec(const EncoderSpec& s) {
  if (s.in_channels < 1) throw std::invalid_argument("encoder: in_channels must be >= 1");
  if (s.feature_channels < 8) {
    throw std::invalid_argument("encoder: feature_channels must be >= 8");
  }
  if (!is_power_of_two(s.stride) || s.stride < 2) {
    throw std::invalid_argument("encoder: stride must be a power of two >= 2");
  }
  if (s.depth < log2_exact(s.stride)) {
    throw std::invalid_argument("encoder: depth must cover log2(stride) downsampling blocks");
  }
}

void validate_disc_spec(const DiscSpec& s, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("discriminator: need at least 2 classes");
  if (s.fine_channels.size() < 2) {
    throw std::invalid_argument("discriminator: fine branch needs at least 2 layers");
  }
  for (std::size_t i = 0; i + 1 < s.fine_channels.size(); ++i) {
    if (s.fine_channels[i] < 1) {
      throw std::invalid_argument("discriminator: fine channel counts must be positive");
    }
  }
  if (s.fine_channels.back() != 1) {
    throw std::invalid_argument("discriminator: fine branch must end in a single channel");
  }
  if (s.coarse_tail_channels.empty()) {
    throw std::invalid_argument("discriminator: coarse tail must have at least 1 layer");
  }
  for (std::size_t i = 0; i + 1 < s.coarse_tail_channels.size(); ++i) {
    if (s.coarse_tail_channels[i] < 1) {
      throw std::invalid_argument("discriminator: coarse channel counts must be positive");
    }
  }
  if (s.coarse_tail_channels.back() != 2 * num_classes) {
    throw std::invalid_argument(
        "discriminator: coarse tail must end in 2*num_classes channels");
  }
  if (s.shared_prefix_layers < 1 ||
      s.shared_prefix_layers >= static_cast<int>(s.fine_channels.size())) {
    throw std::invalid_argument(
        "discriminator: shared prefix must keep at least the final fine layer unshared");
  }
  if (s.fine_kernel < 1 || s.fine_kernel % 2 == 0 || s.coarse_kernel < 1 ||
      s.coarse_kernel % 2 == 0) {
    throw std::invalid_argument("discriminator: kernels must be odd and positive");
  }
  if (s.fine_stride < 1 || s.coarse_stride < 1) {
    throw std::invalid_argument("discriminator: strides must be positive");
  }
  if (!(s.leaky_slope > 0.0 && s.leaky_slope < 1.0)) {
    throw std::invalid_argument("discriminator: leaky slope must be in (0,1)");
  }
}

ConvLayer make_conv(Rng& rng, int kh, int kw, int cin, int cout, int stride, int pad) {
  ConvLayer layer;
  layer.stride = stride;
  layer.pad = pad;
  Tensor w({kh, kw, cin, cout});
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(kh) * kw * cin));
  for (int i = 0; i < w.size(); ++i) w.data()[i] = std_dev * rng.normal();
  layer.weight = ad::Var(std::move(w));
  Tensor b({cout});
  b.fill(0.0);
  layer.bias = ad::Var(std::move(b));
  return layer;
}

ad::Var run_conv(const ConvLayer& layer, const ad::Var& x) {
  return ad::conv2d(x, layer.weight, layer.bias, layer.stride, layer.pad);
}

void push_layer_params(std::vector<NamedParam>& out, const std::string& prefix,
                       ConvLayer& layer) {
  out.push_back({prefix + ".weight", layer.weight});
  out.push_back({prefix + ".bias", layer.bias});
}

}  // namespace

DiscSpec finalize_disc_spec(DiscSpec spec, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("discriminator: need at least 2 classes");
  if (!spec.coarse_tail_channels.empty() && spec.coarse_tail_channels.back() <= 0) {
    spec.coarse_tail_channels.back() = 2 * num_classes;
  }
  validate_disc_spec(spec, num_classes);
  return spec;
}

bool operator==(const EncoderSpec& a, const EncoderSpec& b) {
  return a.in_channels == b.in_channels && a.feature_channels == b.feature_channels &&
         a.stride == b.stride && a.depth == b.depth;
}

bool operator==(const DiscSpec& a, const DiscSpec& b) {
  return a.fine_channels == b.fine_channels &&
         a.coarse_tail_channels == b.coarse_tail_channels &&
         a.shared_prefix_layers == b.shared_prefix_layers && a.leaky_slope == b.leaky_slope &&
         a.fine_kernel == b.fine_kernel && a.fine_stride == b.fine_stride &&
         a.coarse_kernel == b.coarse_kernel && a.coarse_stride == b.coarse_stride;
}

Encoder make_encoder(const EncoderSpec& spec, Rng& rng) {
  validate_encoder_spec(spec);
  Encoder enc;
  enc.spec = spec;
  const int down_blocks = log2_exact(spec.stride);
  int cin = spec.in_channels;
  for (int i = 0; i < spec.depth; ++i) {
    const int shift = spec.depth - 1 - i;
    const int cout = std::max(8, spec.feature_channels >> shift);
    const int stride = i < down_blocks ? 2 : 1;
    enc.blocks.push_back(make_conv(rng, 3, 3, cin, cout, stride, 1));
    cin = cout;
  }
  return enc;
}

SegHead make_seg_head(int feature_channels, int num_classes, int encoder_stride, Rng& rng) {
  if (num_classes < 2) throw std::invalid_argument("seg head: need at least 2 classes");
  if (!is_power_of_two(encoder_stride) || encoder_stride < 2) {
    throw std::invalid_argument("seg head: encoder stride must be a power of two >= 2");
  }
  SegHead head;
  head.num_classes = num_classes;
  head.detail = encoder_stride / 2;
  head.mix = make_conv(rng, 3, 3, feature_channels, feature_channels, 1, 1);
  head.project =
      make_conv(rng, 1, 1, feature_channels, num_classes * head.detail * head.detail, 1, 0);
  return head;
}

Discriminator make_discriminator(const DiscSpec& spec, int in_channels, int num_classes,
                                 Rng& rng) {
  DiscSpec full = finalize_disc_spec(spec, num_classes);
  if (in_channels < 1) throw std::invalid_argument("discriminator: in_channels must be >= 1");
  Discriminator disc;
  disc.spec = full;
  disc.num_classes = num_classes;
  int cin = in_channels;
  const int fpad = (full.fine_kernel - 1) / 2;
  for (int c : full.fine_channels) {
    disc.fine.push_back(make_conv(rng, full.fine_kernel, full.fine_kernel, cin, c,
                                  full.fine_stride, fpad));
    cin = c;
  }
  int tail_cin = full.fine_channels[full.shared_prefix_layers - 1];
  const int cpad = (full.coarse_kernel - 1) / 2;
  for (int c : full.coarse_tail_channels) {
    disc.coarse_tail.push_back(make_conv(rng, full.coarse_kernel, full.coarse_kernel, tail_cin,
                                         c, full.coarse_stride, cpad));
    tail_cin = c;
  }
  return disc;
}

Models make_models(const EncoderSpec& enc, const DiscSpec& disc, int num_classes,
                   std::uint64_t seed) {
  Models m;
  m.encoder_spec = enc;
  m.disc_spec = finalize_disc_spec(disc, num_classes);
  m.num_classes = num_classes;
  Rng enc_rng(derive_seed(seed, 11));
  Rng head_rng(derive_seed(seed, 12));
  Rng disc_rng(derive_seed(seed, 13));
  m.encoder = make_encoder(enc, enc_rng);
  m.seg_head = make_seg_head(enc.feature_channels, num_classes, enc.stride, head_rng);
  m.disc = make_discriminator(m.disc_spec, enc.feature_channels, num_classes, disc_rng);
  return m;
}

ad::Var encode(const Encoder& enc, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != enc.spec.in_channels) {
    throw std::invalid_argument("encode: image must be HxWx" +
                                std::to_string(enc.spec.in_channels));
  }
  if (image.dim(0) % enc.spec.stride != 0 || image.dim(1) % enc.spec.stride != 0) {
    throw std::invalid_argument("encode: image size " + image.shape_str() +
                                " not divisible by stride " + std::to_string(enc.spec.stride));
  }
  ad::Var x = ad::constant(image);
  for (const ConvLayer& layer : enc.blocks) {
    x = ad::leaky_relu(run_conv(layer, x), 0.2);
  }
  return x;
}

ad::Var segment(const SegHead& head, const ad::Var& feature, int encoder_stride) {
  if (!feature.defined() || feature.value().rank() != 3) {
    throw std::invalid_argument("segment: feature must be a rank-3 map");
  }
  if (encoder_stride != 2 * head.detail) {
    throw std::invalid_argument("segment: encoder stride does not match this head");
  }
  const int out_h = feature.value().dim(0) * encoder_stride;
  const int out_w = feature.value().dim(1) * encoder_stride;
  ad::Var x = ad::leaky_relu(run_conv(head.mix, feature), 0.2);
  x = run_conv(head.project, x);
  if (head.detail > 1) x = ad::depth_to_space(x, head.detail);
  x = ad::upsample_bilinear(x, out_h, out_w);
  return ad::softmax_channels(x);
}

DiscOutput discriminate(const Discriminator& disc, const ad::Var& feature, int image_h,
                        int image_w, bool with_coarse) {
  if (!feature.defined() || feature.value().rank() != 3) {
    throw std::invalid_argument("discriminate: feature must be a rank-3 map");
  }
  const DiscSpec& s = disc.spec;
  if (with_coarse) {
    int factor = 1;
    for (std::size_t i = 0; i < disc.coarse_tail.size(); ++i) factor *= s.coarse_stride;
    if (feature.value().dim(0) % factor != 0 || feature.value().dim(1) % factor != 0) {
      throw std::invalid_argument("discriminate: feature size " + feature.value().shape_str() +
                                  " not divisible by the coarse-branch downsampling factor " +
                                  std::to_string(factor));
    }
  }
  const double slope = s.leaky_slope;
  ad::Var x = feature;
  ad::Var shared;
  const int n_fine = static_cast<int>(disc.fine.size());
  for (int i = 0; i < n_fine; ++i) {
    x = run_conv(disc.fine[i], x);
    if (i + 1 < n_fine) x = ad::leaky_relu(x, slope);
    if (i + 1 == s.shared_prefix_layers) shared = x;
  }
  DiscOutput out;
  out.fine_scores = ad::upsample_bilinear(ad::channel(ad::sigmoid(x), 0), image_h, image_w);
  if (with_coarse) {
    ad::Var y = shared;
    const int n_tail = static_cast<int>(disc.coarse_tail.size());
    for (int i = 0; i < n_tail; ++i) {
      y = run_conv(disc.coarse_tail[i], y);
      if (i + 1 < n_tail) y = ad::leaky_relu(y, slope);
    }
    out.coarse_raw = y;
  }
  return out;
}

std::vector<NamedParam> encoder_params(Encoder& enc) {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
    push_layer_params(out, "encoder.block" + std::to_string(i), enc.blocks[i]);
  }
  return out;
}

std::vector<NamedParam> seg_head_params(SegHead& head) {
  std::vector<NamedParam> out;
  push_layer_params(out, "seg_head.mix", head.mix);
  push_layer_params(out, "seg_head.project", head.project);
  return out;
}

std::vector<NamedParam> disc_params(Discriminator& disc) {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < disc.fine.size(); ++i) {
    push_layer_params(out, "disc.fine" + std::to_string(i), disc.fine[i]);
  }
  for (std::size_t i = 0; i < disc.coarse_tail.size(); ++i) {
    push_layer_params(out, "disc.coarse" + std::to_string(i), disc.coarse_tail[i]);
  }
  return out;
}

std::vector<NamedParam> all_params(Models& m) {
  std::vector<NamedParam> out = encoder_params(m.encoder);
  for (auto& p : seg_head_params(m.seg_head)) out.push_back(p);
  for (auto& p : disc_params(m.disc)) out.push_back(p);
  return out;
}

void set_trainable(const std::vector<NamedParam>& params, bool trainable) {
  for (const NamedParam& p : params) {
    ad::Var v = p.var;
    v.set_trainable(trainable);
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'C', 'D', 'A', 'C', 'K', 'P', '1'};

json encoder_spec_json(const EncoderSpec& s) {
  return json{{"in_channels", s.in_channels},
              {"feature_channels", s.feature_channels},
              {"stride", s.stride},
              {"depth", s.depth}};
}

EncoderSpec encoder_spec_from_json(const json& j) {
  EncoderSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.feature_channels = j.at("feature_channels").get<int>();
  s.stride = j.at("stride").get<int>();
  s.depth = j.at("depth").get<int>();
  return s;
}

json disc_spec_json(const DiscSpec& s) {
  return json{{"fine_channels", s.fine_channels},
              {"coarse_tail_channels", s.coarse_tail_channels},
              {"shared_prefix_layers", s.shared_prefix_layers},
              {"leaky_slope", s.leaky_slope},
              {"fine_kernel", s.fine_kernel},
              {"fine_stride", s.fine_stride},
              {"coarse_kernel", s.coarse_kernel},
              {"coarse_stride", s.coarse_stride}};
}

DiscSpec disc_spec_from_json(const json& j) {
  DiscSpec s;
  s.fine_channels = j.at("fine_channels").get<std::vector<int>>();
  s.coarse_tail_channels = j.at("coarse_tail_channels").get<std::vector<int>>();
  s.shared_prefix_layers = j.at("shared_prefix_layers").get<int>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  s.fine_kernel = j.at("fine_kernel").get<int>();
  s.fine_stride = j.at("fine_stride").get<int>();
  s.coarse_kernel = j.at("coarse_kernel").get<int>();
  s.coarse_stride = j.at("coarse_stride").get<int>();
  return s;
}

json shape_json(const Tensor& t) {
  json arr = json::array();
  for (int d = 0; d < t.rank(); ++d) arr.push_back(t.dim(d));
  return arr;
}

void write_doubles(std::ofstream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double)) * t.size());
}

void read_doubles(std::ifstream& in, Tensor& t, const std::string& name,
                  const std::string& path) {
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(sizeof(double)) * t.size());
  if (!in) {
    throw std::runtime_error("checkpoint " + path + ": truncated while reading " + name);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, Models& models, std::int64_t step,
                     const std::map<std::string, Tensor>& extra) {
  std::vector<NamedParam> params = all_params(models);
  json header;
  header["version"] = 1;
  header["step"] = step;
  header["num_classes"] = models.num_classes;
  header["encoder_spec"] = encoder_spec_json(models.encoder_spec);
  header["disc_spec"] = disc_spec_json(models.disc_spec);
  json plist = json::array();
  for (const NamedParam& p : params) {
    plist.push_back(json{{"name", p.name}, {"shape", shape_json(p.var.value())}});
  }
  header["params"] = plist;
  json elist = json::array();
  for (const auto& [name, t] : extra) {
    elist.push_back(json{{"name", name}, {"shape", shape_json(t)}});
  }
  header["extra"] = elist;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const NamedParam& p : params) write_doubles(out, p.var.value());
  for (const auto& [name, t] : extra) {
    (void)name;
    write_doubles(out, t);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint " + path + ": bad magic (not a checkpoint file?)");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len == 0 || header_len > (1ULL << 24)) {
    throw std::runtime_error("checkpoint " + path + ": bad header length");
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated header");
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": invalid header: " + e.what());
  }
  if (header.at("version").get<int>() != 1) {
    throw std::runtime_error("checkpoint " + path + ": unsupported version");
  }

  Checkpoint ckpt;
  ckpt.step = header.at("step").get<std::int64_t>();
  const int num_classes = header.at("num_classes").get<int>();
  const EncoderSpec enc_spec = encoder_spec_from_json(header.at("encoder_spec"));
  const DiscSpec disc_spec = disc_spec_from_json(header.at("disc_spec"));
  ckpt.models = make_models(enc_spec, disc_spec, num_classes, /*seed=*/0);

  std::vector<NamedParam> params = all_params(ckpt.models);
  const json& plist = header.at("params");
  if (plist.size() != params.size()) {
    throw std::runtime_error("checkpoint " + path + ": parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& entry = plist.at(i);
    if (entry.at("name").get<std::string>() != params[i].name) {
      throw std::runtime_error("checkpoint " + path + ": parameter order mismatch at " +
                               params[i].name);
    }
    const auto shape = entry.at("shape").get<std::vector<int>>();
    const Tensor& have = params[i].var.value();
    bool ok = static_cast<int>(shape.size()) == have.rank();
    for (int d = 0; ok && d < have.rank(); ++d) ok = shape[d] == have.dim(d);
    if (!ok) {
      throw std::runtime_error("checkpoint " + path + ": shape mismatch for " + params[i].name);
    }
  }
  for (NamedParam& p : params) {
    Tensor& t = p.var.node()->value;
    read_doubles(in, t, p.name, path);
  }
  for (const json& entry : header.at("extra")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    read_doubles(in, t, name, path);
    ckpt.extra.emplace(name, std::move(t));
  }
  return ckpt;
}

}  // namespace ccda
