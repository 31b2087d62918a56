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
#include "ccda/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ccda {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + path + ": " + what);
}

void check_source(const std::string& s, const std::string& path) {
  if (s != "paper" && s != "default" && s != "user") {
    config_error(path, "source must be paper, default, or user (got '" + s + "')");
  }
}

template <typename T>
void read_field(const json& v, Resolved<T>& field, const std::string& path) {
  try {
    if (v.is_object()) {
      for (const auto& [k, sub] : v.items()) {
        (void)sub;
        if (k != "value" && k != "source") config_error(path + "." + k, "unknown key");
      }
      if (!v.contains("value")) config_error(path, "wrapped field needs a value");
      field.value = v.at("value").get<T>();
      if (v.contains("source")) {
        field.source = v.at("source").get<std::string>();
        check_source(field.source, path);
      } else {
        field.source = "user";
      }
    } else {
      field.value = v.get<T>();
      field.source = "user";
    }
  } catch (const json::exception& e) {
    config_error(path, std::string("bad value: ") + e.what());
  }
}

template <typename T>
json emit_field(const Resolved<T>& field) {
  return json{{"value", field.value}, {"source", field.source}};
}

using FieldBinder = std::function<void(const json&, const std::string&)>;

struct SectionParser {
  std::map<std::string, FieldBinder, std::less<>> fields;

  template <typename T>
  void bind(const std::string& key, Resolved<T>& field) {
    fields[key] = [&field](const json& v, const std::string& path) {
      read_field(v, field, path);
    };
  }

  void parse(const json& obj, const std::string& section) const {
    if (!obj.is_object()) config_error(section, "must be an object");
    for (const auto& [k, v] : obj.items()) {
      auto it = fields.find(k);
      if (it == fields.end()) config_error(section + "." + k, "unknown key");
      it->second(v, section + "." + k);
    }
  }
};

void parse_into(RunConfig& cfg, const json& root) {
  if (!root.is_object()) throw std::invalid_argument("config: top level must be a JSON object");

  SectionParser scene;
  scene.bind("image_height", cfg.scene.image_height);
  scene.bind("image_width", cfg.scene.image_width);
  scene.bind("num_classes", cfg.scene.num_classes);
  scene.bind("class_frequency_skew", cfg.scene.class_frequency_skew);
  scene.bind("shapes_min", cfg.scene.shapes_min);
  scene.bind("shapes_max", cfg.scene.shapes_max);
  scene.bind("train_images", cfg.scene.train_images);
  scene.bind("val_images", cfg.scene.val_images);

  SectionParser shift;
  shift.bind("brightness_offset", cfg.shift.brightness_offset);
  shift.bind("contrast_scale", cfg.shift.contrast_scale);
  shift.bind("hue_rotation_deg", cfg.shift.hue_rotation_deg);
  shift.bind("noise_stddev", cfg.shift.noise_stddev);
  shift.bind("texture_frequency", cfg.shift.texture_frequency);

  SectionParser model;
  model.bind("feature_channels", cfg.model.feature_channels);
  model.bind("encoder_stride", cfg.model.encoder_stride);
  model.bind("encoder_depth", cfg.model.encoder_depth);
  model.bind("fine_channels", cfg.model.fine_channels);
  model.bind("coarse_tail_channels", cfg.model.coarse_tail_channels);
  model.bind("shared_prefix_layers", cfg.model.shared_prefix_layers);
  model.bind("leaky_slope", cfg.model.leaky_slope);

  SectionParser train;
  train.bind("variant", cfg.train.variant);
  train.bind("iterations", cfg.train.iterations);
  train.bind("crop_height", cfg.train.crop_height);
  train.bind("crop_width", cfg.train.crop_width);
  train.bind("sgd_lr", cfg.train.sgd_lr);
  train.bind("sgd_momentum", cfg.train.sgd_momentum);
  train.bind("weight_decay", cfg.train.weight_decay);
  train.bind("adam_lr", cfg.train.adam_lr);
  train.bind("adam_beta1", cfg.train.adam_beta1);
  train.bind("adam_beta2", cfg.train.adam_beta2);
  train.bind("adam_epsilon", cfg.train.adam_epsilon);
  train.bind("lr_decay_power", cfg.train.lr_decay_power);
  train.bind("checkpoint_every", cfg.train.checkpoint_every);
  train.bind("update_order", cfg.train.update_order);
  train.bind("seed", cfg.train.seed);

  SectionParser weights;
  weights.bind("lambda_s", cfg.weights.lambda_s);
  weights.bind("lambda_t", cfg.weights.lambda_t);
  weights.bind("lambda_c", cfg.weights.lambda_c);
  weights.bind("lambda_n", cfg.weights.lambda_n);
  weights.bind("alpha", cfg.weights.alpha);
  weights.bind("beta", cfg.weights.beta);
  weights.bind("epsilon", cfg.weights.epsilon);

  SectionParser thresholds;
  thresholds.bind("th_w", cfg.thresholds.th_w);
  thresholds.bind("th_n", cfg.thresholds.th_n);

  SectionParser eval;
  eval.bind("split", cfg.eval.split);
  eval.bind("ablation_seeds", cfg.eval.ablation_seeds);

  const std::map<std::string, const SectionParser*, std::less<>> sections = {
      {"scene", &scene},   {"shift", &shift},           {"model", &model},
      {"train", &train},   {"weights", &weights},       {"thresholds", &thresholds},
      {"eval", &eval}};
  for (const auto& [k, v] : root.items()) {
    auto it = sections.find(k);
    if (it == sections.end()) config_error(k, "unknown section");
    it->second->parse(v, k);
  }
}

json emit(const RunConfig& cfg) {
  json root;
  root["scene"] = json{{"image_height", emit_field(cfg.scene.image_height)},
                       {"image_width", emit_field(cfg.scene.image_width)},
                       {"num_classes", emit_field(cfg.scene.num_classes)},
                       {"class_frequency_skew", emit_field(cfg.scene.class_frequency_skew)},
                       {"shapes_min", emit_field(cfg.scene.shapes_min)},
                       {"shapes_max", emit_field(cfg.scene.shapes_max)},
                       {"train_images", emit_field(cfg.scene.train_images)},
                       {"val_images", emit_field(cfg.scene.val_images)}};
  root["shift"] = json{{"brightness_offset", emit_field(cfg.shift.brightness_offset)},
                       {"contrast_scale", emit_field(cfg.shift.contrast_scale)},
                       {"hue_rotation_deg", emit_field(cfg.shift.hue_rotation_deg)},
                       {"noise_stddev", emit_field(cfg.shift.noise_stddev)},
                       {"texture_frequency", emit_field(cfg.shift.texture_frequency)}};
  root["model"] = json{{"feature_channels", emit_field(cfg.model.feature_channels)},
                       {"encoder_stride", emit_field(cfg.model.encoder_stride)},
                       {"encoder_depth", emit_field(cfg.model.encoder_depth)},
                       {"fine_channels", emit_field(cfg.model.fine_channels)},
                       {"coarse_tail_channels", emit_field(cfg.model.coarse_tail_channels)},
                       {"shared_prefix_layers", emit_field(cfg.model.shared_prefix_layers)},
                       {"leaky_slope", emit_field(cfg.model.leaky_slope)}};
  root["train"] = json{{"variant", emit_field(cfg.train.variant)},
                       {"iterations", emit_field(cfg.train.iterations)},
                       {"crop_height", emit_field(cfg.train.crop_height)},
                       {"crop_width", emit_field(cfg.train.crop_width)},
                       {"sgd_lr", emit_field(cfg.train.sgd_lr)},
                       {"sgd_momentum", emit_field(cfg.train.sgd_momentum)},
                       {"weight_decay", emit_field(cfg.train.weight_decay)},
                       {"adam_lr", emit_field(cfg.train.adam_lr)},
                       {"adam_beta1", emit_field(cfg.train.adam_beta1)},
                       {"adam_beta2", emit_field(cfg.train.adam_beta2)},
                       {"adam_epsilon", emit_field(cfg.train.adam_epsilon)},
                       {"lr_decay_power", emit_field(cfg.train.lr_decay_power)},
                       {"checkpoint_every", emit_field(cfg.train.checkpoint_every)},
                       {"update_order", emit_field(cfg.train.update_order)},
                       {"seed", emit_field(cfg.train.seed)}};
  root["weights"] = json{{"lambda_s", emit_field(cfg.weights.lambda_s)},
                         {"lambda_t", emit_field(cfg.weights.lambda_t)},
                         {"lambda_c", emit_field(cfg.weights.lambda_c)},
                         {"lambda_n", emit_field(cfg.weights.lambda_n)},
                         {"alpha", emit_field(cfg.weights.alpha)},
                         {"beta", emit_field(cfg.weights.beta)},
                         {"epsilon", emit_field(cfg.weights.epsilon)}};
  root["thresholds"] =
      json{{"th_w", emit_field(cfg.thresholds.th_w)}, {"th_n", emit_field(cfg.thresholds.th_n)}};
  root["eval"] = json{{"split", emit_field(cfg.eval.split)},
                      {"ablation_seeds", emit_field(cfg.eval.ablation_seeds)}};
  return root;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config_text(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  parse_into(cfg, root);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + " (in " + path + ")");
  }
}

std::string resolved_text(const RunConfig& cfg) { return emit(cfg).dump(2) + "\n"; }

void write_resolved(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config: cannot open " + path + " for writing");
  out << resolved_text(cfg);
  if (!out.flush()) throw std::runtime_error("config: failed writing " + path);
}

SceneSpec to_scene_spec(const RunConfig& cfg, std::uint64_t seed) {
  SceneSpec s;
  s.image_height = cfg.scene.image_height.value;
  s.image_width = cfg.scene.image_width.value;
  s.num_classes = cfg.scene.num_classes.value;
  s.class_frequency_skew = cfg.scene.class_frequency_skew.value;
  s.shapes_min = cfg.scene.shapes_min.value;
  s.shapes_max = cfg.scene.shapes_max.value;
  s.seed = seed;
  validate_scene_spec(s);
  return s;
}

DomainShiftSpec to_shift_spec(const RunConfig& cfg) {
  DomainShiftSpec s;
  s.brightness_offset = cfg.shift.brightness_offset.value;
  s.contrast_scale = cfg.shift.contrast_scale.value;
  s.hue_rotation_deg = cfg.shift.hue_rotation_deg.value;
  s.noise_stddev = cfg.shift.noise_stddev.value;
  s.texture_frequency = cfg.shift.texture_frequency.value;
  return s;
}

EncoderSpec to_encoder_spec(const RunConfig& cfg) {
  EncoderSpec s;
  s.in_channels = 3;
  s.feature_channels = cfg.model.feature_channels.value;
  s.stride = cfg.model.encoder_stride.value;
  s.depth = cfg.model.encoder_depth.value;
  return s;
}

DiscSpec to_disc_spec(const RunConfig& cfg) {
  DiscSpec s;
  s.fine_channels = cfg.model.fine_channels.value;
  s.coarse_tail_channels = cfg.model.coarse_tail_channels.value;
  s.shared_prefix_layers = cfg.model.shared_prefix_layers.value;
  s.leaky_slope = cfg.model.leaky_slope.value;
  return s;
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.variant = variant_from_string(cfg.train.variant.value);
  t.iterations = cfg.train.iterations.value;
  t.crop_height = cfg.train.crop_height.value;
  t.crop_width = cfg.train.crop_width.value;
  t.sgd_lr = cfg.train.sgd_lr.value;
  t.sgd_momentum = cfg.train.sgd_momentum.value;
  t.weight_decay = cfg.train.weight_decay.value;
  t.adam_lr = cfg.train.adam_lr.value;
  t.adam_beta1 = cfg.train.adam_beta1.value;
  t.adam_beta2 = cfg.train.adam_beta2.value;
  t.adam_epsilon = cfg.train.adam_epsilon.value;
  t.lr_decay_power = cfg.train.lr_decay_power.value;
  t.checkpoint_every = cfg.train.checkpoint_every.value;
  t.update_order = cfg.train.update_order.value;
  t.seed = cfg.train.seed.value;
  t.weights.lambda_s = cfg.weights.lambda_s.value;
  t.weights.lambda_t = cfg.weights.lambda_t.value;
  t.weights.lambda_c = cfg.weights.lambda_c.value;
  t.weights.lambda_n = cfg.weights.lambda_n.value;
  t.weights.alpha = cfg.weights.alpha.value;
  t.weights.beta = cfg.weights.beta.value;
  t.weights.epsilon = cfg.weights.epsilon.value;
  t.th_w = cfg.thresholds.th_w.value;
  t.th_n = cfg.thresholds.th_n.value;
  return t;
}

}  // namespace ccda
