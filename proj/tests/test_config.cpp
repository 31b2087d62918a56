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
#include <string>
#include <vector>

#include <doctest.h>

#include "ccda/config.hpp"
#include "test_util.hpp"

namespace {

using ccda::RunConfig;

TEST_SUITE("config") {

TEST_CASE("defaults carry their provenance markers") {
  RunConfig cfg = ccda::default_config();
  CHECK(cfg.train.sgd_lr.value == 2.5e-4);
  CHECK(cfg.train.sgd_lr.source == "paper");
  CHECK(cfg.weights.lambda_s.value == 3e-4);
  CHECK(cfg.weights.lambda_s.source == "paper");
  CHECK(cfg.scene.image_height.value == 64);
  CHECK(cfg.scene.image_height.source == "default");
  CHECK(cfg.thresholds.th_w.value == 0.9);
  CHECK(cfg.thresholds.th_n.value == 0.5);
  CHECK(cfg.model.fine_channels.value == std::vector<int>{32, 64, 64, 64, 1});
  CHECK(cfg.eval.ablation_seeds.value == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
}

TEST_CASE("bare scalars override values and become user-sourced") {
  RunConfig cfg = ccda::parse_config_text(R"({
    "train": {"iterations": 300, "sgd_lr": 1e-3},
    "weights": {"beta": 0.25},
    "scene": {"num_classes": 7}
  })");
  CHECK(cfg.train.iterations.value == 300);
  CHECK(cfg.train.iterations.source == "user");
  CHECK(cfg.train.sgd_lr.value == 1e-3);
  CHECK(cfg.train.sgd_lr.source == "user");
  CHECK(cfg.weights.beta.value == 0.25);
  CHECK(cfg.scene.num_classes.value == 7);
  // untouched fields keep their defaults and provenance
  CHECK(cfg.train.sgd_momentum.value == 0.9);
  CHECK(cfg.train.sgd_momentum.source == "paper");
}

TEST_CASE("value-source wrappers keep the declared provenance") {
  RunConfig cfg = ccda::parse_config_text(R"({
    "train": {"adam_lr": {"value": 2e-4, "source": "paper"}},
    "weights": {"lambda_c": {"value": 0.002, "source": "default"}}
  })");
  CHECK(cfg.train.adam_lr.value == 2e-4);
  CHECK(cfg.train.adam_lr.source == "paper");
  CHECK(cfg.weights.lambda_c.value == 0.002);
  CHECK(cfg.weights.lambda_c.source == "default");
}

TEST_CASE("unknown sections and keys are rejected with their path") {
  CHECK_THROWS_WITH_AS((void)ccda::parse_config_text(R"({"cooking": {}})"),
                       doctest::Contains("cooking"), std::invalid_argument);
  CHECK_THROWS_WITH_AS((void)ccda::parse_config_text(R"({"train": {"warmup": 5}})"),
                       doctest::Contains("train.warmup"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      (void)ccda::parse_config_text(R"({"train": {"sgd_lr": {"value": 1, "typo": 2}}})"),
      doctest::Contains("typo"), std::invalid_argument);
  CHECK_THROWS_WITH_AS((void)ccda::parse_config_text("[1,2,3]"),
                       doctest::Contains("top level"), std::invalid_argument);
  CHECK_THROWS_WITH_AS((void)ccda::parse_config_text("{nope"),
                       doctest::Contains("invalid JSON"), std::invalid_argument);
}

TEST_CASE("emit and parse are symmetric including provenance") {
  RunConfig cfg = ccda::parse_config_text(R"({
    "train": {"iterations": 123},
    "shift": {"hue_rotation_deg": 45.5},
    "model": {"fine_channels": [16, 16, 1]}
  })");
  const std::string text = ccda::resolved_text(cfg);
  RunConfig back = ccda::parse_config_text(text);
  CHECK(back.train.iterations.value == 123);
  CHECK(back.train.iterations.source == "user");
  CHECK(back.shift.hue_rotation_deg.value == 45.5);
  CHECK(back.shift.hue_rotation_deg.source == "user");
  CHECK(back.model.fine_channels.value == std::vector<int>{16, 16, 1});
  CHECK(back.train.sgd_lr.source == "paper");
  // a second emission is byte-identical: the output is canonical
  CHECK(ccda::resolved_text(back) == text);
}

TEST_CASE("config files load from disk and report open failures") {
  testutil::TempDir dir("config");
  const std::string path = dir.sub("run.json");
  testutil::write_file(path, R"({"train": {"seed": 99}})");
  RunConfig cfg = ccda::load_config(path);
  CHECK(cfg.train.seed.value == 99);
  CHECK_THROWS_WITH_AS((void)ccda::load_config(dir.sub("absent.json")),
                       doctest::Contains("absent.json"), std::invalid_argument);

  ccda::write_resolved(dir.sub("resolved.json"), cfg);
  RunConfig again = ccda::load_config(dir.sub("resolved.json"));
  CHECK(again.train.seed.value == 99);
  CHECK(again.train.seed.source == "user");
}

TEST_CASE("conversions materialize the module inputs") {
  RunConfig cfg = ccda::parse_config_text(R"({
    "scene": {"image_height": 32, "image_width": 32, "num_classes": 4},
    "train": {"variant": "class", "crop_height": 32, "crop_width": 32},
    "thresholds": {"th_w": 0.8, "th_n": 0.4},
    "weights": {"lambda_n": 0.5}
  })");

  ccda::SceneSpec scene = ccda::to_scene_spec(cfg, 77);
  CHECK(scene.image_height == 32);
  CHECK(scene.num_classes == 4);
  CHECK(scene.seed == 77);

  ccda::DomainShiftSpec shift = ccda::to_shift_spec(cfg);
  CHECK(shift.hue_rotation_deg == 30.0);
  CHECK(shift.contrast_scale == 0.8);

  ccda::EncoderSpec enc = ccda::to_encoder_spec(cfg);
  CHECK(enc.feature_channels == 64);
  CHECK(enc.stride == 8);

  ccda::DiscSpec disc = ccda::to_disc_spec(cfg);
  CHECK(disc.fine_channels == std::vector<int>{32, 64, 64, 64, 1});
  CHECK(disc.coarse_tail_channels.back() == -1);  // materialized later, per C

  ccda::TrainConfig train = ccda::to_train_config(cfg);
  CHECK(train.variant == ccda::Variant::kClassConditional);
  CHECK(train.crop_height == 32);
  CHECK(train.th_w == 0.8);
  CHECK(train.th_n == 0.4);
  CHECK(train.weights.lambda_n == 0.5);
  CHECK(train.sgd_lr == 2.5e-4);
}

}  // TEST_SUITE

}  // namespace
