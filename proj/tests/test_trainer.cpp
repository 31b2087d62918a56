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
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <doctest.h>

#include "ccda/datagen.hpp"
#include "ccda/nets.hpp"
#include "ccda/trainer.hpp"
#include "test_util.hpp"

namespace {

using ccda::Dataset;
using ccda::DiscSpec;
using ccda::DomainShiftSpec;
using ccda::EncoderSpec;
using ccda::NamedParam;
using ccda::SceneSpec;
using ccda::Tensor;
using ccda::TrainConfig;
using ccda::TrainSession;
using ccda::Variant;

EncoderSpec tiny_encoder() {
  EncoderSpec e;
  e.feature_channels = 16;
  e.stride = 8;
  e.depth = 4;
  return e;
}

DiscSpec tiny_disc() {
  DiscSpec d;
  d.fine_channels = {16, 16, 1};
  d.coarse_tail_channels = {16, -1};
  d.shared_prefix_layers = 1;
  return d;
}

TrainConfig tiny_config(Variant v, int iterations) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.iterations = iterations;
  cfg.crop_height = 32;
  cfg.crop_width = 32;
  cfg.seed = 11;
  cfg.checkpoint_every = 1000;
  // loss weights large enough that adversarial gradients are visible
  cfg.weights.lambda_s = 1e-3;
  cfg.weights.lambda_t = 1e-3;
  cfg.weights.lambda_c = 1e-3;
  return cfg;
}

Dataset tiny_domain(std::uint64_t seed, double hue) {
  SceneSpec spec;
  spec.image_height = 32;
  spec.image_width = 32;
  spec.num_classes = 4;
  spec.shapes_min = 3;
  spec.shapes_max = 5;
  spec.seed = seed;
  DomainShiftSpec shift;
  shift.hue_rotation_deg = hue;
  return ccda::generate_domain(spec, shift, 6);
}

std::vector<Tensor> snapshot_params(ccda::Models& m) {
  std::vector<Tensor> out;
  for (const NamedParam& p : ccda::all_params(m)) out.push_back(p.var.value());
  return out;
}

bool same_tensors(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) return false;
    for (std::int64_t j = 0; j < a[i].size(); ++j) {
      if (a[i][j] != b[i][j]) return false;
    }
  }
  return true;
}

TEST_SUITE("trainer") {

TEST_CASE("variant names round trip and unknown names are rejected") {
  CHECK(ccda::variant_from_string("basic") == Variant::kBasic);
  CHECK(ccda::variant_from_string("class") == Variant::kClassConditional);
  CHECK(ccda::variant_from_string("full") == Variant::kFull);
  CHECK(ccda::to_string(Variant::kClassConditional) == "class");
  CHECK_THROWS_AS((void)ccda::variant_from_string("deluxe"), std::invalid_argument);
}

TEST_CASE("train config validation checks crops, rates and order") {
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  CHECK_NOTHROW(ccda::validate_train_config(cfg, tiny_encoder(), tiny_disc()));

  TrainConfig bad = cfg;
  bad.crop_width = 28;  // not divisible by the encoder stride
  CHECK_THROWS_AS(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()),
                  std::invalid_argument);

  bad = cfg;
  bad.crop_height = 24;  // divisible by 8 but not by the coarse factor 32
  CHECK_THROWS_AS(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()),
                  std::invalid_argument);
  bad.variant = Variant::kBasic;  // without the coarse branch it is fine
  CHECK_NOTHROW(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()));

  bad = cfg;
  bad.iterations = 0;
  CHECK_THROWS_AS(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()),
                  std::invalid_argument);

  bad = cfg;
  bad.sgd_lr = 0.0;
  CHECK_THROWS_AS(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()),
                  std::invalid_argument);

  bad = cfg;
  bad.update_order = "scrambled";
  CHECK_THROWS_AS(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()),
                  std::invalid_argument);

  bad = cfg;
  bad.th_w = 1.5;
  CHECK_THROWS_AS(ccda::validate_train_config(bad, tiny_encoder(), tiny_disc()),
                  std::invalid_argument);
}

TEST_CASE("session constructor validates the datasets") {
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  Dataset src = tiny_domain(1, 0.0);
  Dataset tgt = tiny_domain(2, 30.0);

  Dataset unlabeled = src;
  for (auto& s : unlabeled.samples) s.has_labels = false;
  CHECK_THROWS_AS(TrainSession(cfg, tiny_encoder(), tiny_disc(), unlabeled, tgt),
                  std::invalid_argument);

  Dataset other_c = tgt;
  other_c.scene.num_classes = 5;
  CHECK_THROWS_AS(TrainSession(cfg, tiny_encoder(), tiny_disc(), src, other_c),
                  std::invalid_argument);

  TrainConfig big = cfg;
  big.crop_height = 64;
  big.crop_width = 64;
  CHECK_THROWS_AS(TrainSession(big, tiny_encoder(), tiny_disc(), src, tgt),
                  std::invalid_argument);
}

TEST_CASE("full-variant steps emit every term with exact totals") {
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  TrainSession session(cfg, tiny_encoder(), tiny_disc(), tiny_domain(1, 0.0),
                       tiny_domain(2, 30.0));
  CHECK(session.current_step() == 0);
  CHECK(session.es_learning_rate() == cfg.sgd_lr);
  CHECK(session.d_learning_rate() == cfg.adam_lr);

  for (int i = 0; i < 3; ++i) {
    ccda::LossReport r = session.step();
    for (const std::string& name : ccda::LossReport::term_order()) {
      CAPTURE(name);
      REQUIRE(r.has(name));
      CHECK(std::isfinite(r.get(name)));
    }
    // the logged totals are sums of the logged components, exactly
    CHECK(r.get("total_D") == r.get("d_fine") + r.get("d_coarse"));
    CHECK(r.get("total_ES") == r.get("pred") + r.get("adv_fine") + r.get("adv_coarse"));
    CHECK(r.get("d_fine") == cfg.weights.beta * r.get("d1") +
                                 (1.0 - cfg.weights.beta) * r.get("d2"));
    CHECK(r.get("adv_fine") == cfg.weights.beta * r.get("adv1") +
                                   (1.0 - cfg.weights.beta) * r.get("adv2"));
    CHECK(r.get("pred") == cfg.weights.alpha * r.get("seg_ce") +
                               (1.0 - cfg.weights.alpha) * r.get("dice"));
    CHECK(r.get("seg_ce") > 0.0);
    CHECK(r.get("d_coarse") > 0.0);
  }
  CHECK(session.current_step() == 3);

  // poly decay of both schedules
  const double frac = 3.0 / 10.0;
  CHECK(session.es_learning_rate() ==
        doctest::Approx(cfg.sgd_lr * std::pow(1.0 - frac, cfg.lr_decay_power)).epsilon(1e-15));
  CHECK(session.d_learning_rate() ==
        doctest::Approx(cfg.adam_lr * std::pow(1.0 - frac, cfg.lr_decay_power)).epsilon(1e-15));
}

TEST_CASE("the basic variant forces CE-only prediction and plain blending") {
  TrainConfig cfg = tiny_config(Variant::kBasic, 10);
  cfg.weights.alpha = 0.7;  // the constructor must override these to 1
  cfg.weights.beta = 0.5;
  TrainSession session(cfg, tiny_encoder(), tiny_disc(), tiny_domain(1, 0.0),
                       tiny_domain(2, 30.0));
  CHECK(session.config().weights.alpha == 1.0);
  CHECK(session.config().weights.beta == 1.0);

  ccda::LossReport r = session.step();
  // dice is still measured for the log, but alpha = 1 keeps it out of pred
  CHECK(r.get("pred") == r.get("seg_ce"));
  CHECK(r.get("dice") > 0.0);
  CHECK(r.get("d2") == 0.0);
  CHECK(r.get("adv2") == 0.0);
  CHECK(r.get("d_fine") == r.get("d1"));
  CHECK(r.get("adv_fine") == r.get("adv1"));
  CHECK(r.get("d_coarse") == 0.0);
  CHECK(r.get("adv_coarse") == 0.0);
  CHECK(r.get("d1") > 0.0);
}

TEST_CASE("the class-conditional variant runs fine terms but no coarse head") {
  TrainConfig cfg = tiny_config(Variant::kClassConditional, 10);
  TrainSession session(cfg, tiny_encoder(), tiny_disc(), tiny_domain(1, 0.0),
                       tiny_domain(2, 30.0));
  ccda::LossReport r = session.step();
  CHECK(r.get("d2") > 0.0);
  CHECK(r.get("adv2") > 0.0);
  CHECK(r.get("dice") > 0.0);
  CHECK(r.get("d_coarse") == 0.0);
  CHECK(r.get("adv_coarse") == 0.0);
  CHECK(r.get("d_fine") ==
        cfg.weights.beta * r.get("d1") + (1.0 - cfg.weights.beta) * r.get("d2"));
}

TEST_CASE("zero adversarial weights reduce training to source-only") {
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  cfg.weights.lambda_s = 0.0;
  cfg.weights.lambda_t = 0.0;
  cfg.weights.lambda_c = 0.0;
  TrainSession session(cfg, tiny_encoder(), tiny_disc(), tiny_domain(1, 0.0),
                       tiny_domain(2, 30.0));
  ccda::LossReport r = session.step();
  CHECK(r.get("pred") > 0.0);
  const char* adversarial[] = {"d1", "adv1", "d2", "adv2", "d_fine",
                               "adv_fine", "d_coarse", "adv_coarse", "total_D"};
  for (const char* name : adversarial) {
    CAPTURE(name);
    CHECK(r.get(name) == 0.0);
  }
  CHECK(r.get("total_ES") == r.get("pred"));
}

TEST_CASE("identical sessions evolve identically") {
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  Dataset src = tiny_domain(1, 0.0);
  Dataset tgt = tiny_domain(2, 30.0);
  TrainSession a(cfg, tiny_encoder(), tiny_disc(), src, tgt);
  TrainSession b(cfg, tiny_encoder(), tiny_disc(), src, tgt);
  for (int i = 0; i < 3; ++i) {
    ccda::LossReport ra = a.step();
    ccda::LossReport rb = b.step();
    for (const std::string& name : ccda::LossReport::term_order()) {
      CHECK(ra.get(name) == rb.get(name));
    }
  }
  CHECK(same_tensors(snapshot_params(a.models()), snapshot_params(b.models())));
}

TEST_CASE("the recorded update order does not change the arithmetic") {
  // both phases backpropagate pieces of the same forward graph, so applying
  // the segmentation update before or after the discriminator update reads
  // the same cached values either way
  Dataset src = tiny_domain(1, 0.0);
  Dataset tgt = tiny_domain(2, 30.0);
  TrainConfig es_first = tiny_config(Variant::kFull, 10);
  es_first.update_order = "es_first";
  TrainConfig d_first = es_first;
  d_first.update_order = "d_first";

  TrainSession a(es_first, tiny_encoder(), tiny_disc(), src, tgt);
  TrainSession b(d_first, tiny_encoder(), tiny_disc(), src, tgt);
  for (int i = 0; i < 3; ++i) {
    ccda::LossReport ra = a.step();
    ccda::LossReport rb = b.step();
    for (const std::string& name : ccda::LossReport::term_order()) {
      CHECK(ra.get(name) == rb.get(name));
    }
  }
  CHECK(same_tensors(snapshot_params(a.models()), snapshot_params(b.models())));
}

TEST_CASE("phase isolation: no gradient crosses the frozen side") {
  TrainConfig cfg = tiny_config(Variant::kFull, 20);
  TrainSession session(cfg, tiny_encoder(), tiny_disc(), tiny_domain(1, 0.0),
                       tiny_domain(2, 30.0));
  session.enable_diagnostics(true);
  for (int i = 0; i < 5; ++i) {
    (void)session.step();
    const ccda::StepDiagnostics& d = session.diagnostics();
    REQUIRE(d.valid);
    CHECK(d.disc_grad_during_es == 0.0);
    CHECK(d.es_grad_during_d == 0.0);
    // adversarial pressure must reach the encoder through the frozen
    // discriminator
    CHECK(d.encoder_grad_from_adv > 0.0);
  }
}

TEST_CASE("save and restore resume the exact trajectory") {
  testutil::TempDir dir("resume");
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  Dataset src = tiny_domain(1, 0.0);
  Dataset tgt = tiny_domain(2, 30.0);

  TrainSession a(cfg, tiny_encoder(), tiny_disc(), src, tgt);
  for (int i = 0; i < 3; ++i) (void)a.step();
  const std::string path = dir.sub("mid.ckpt");
  a.save(path);
  ccda::LossReport a4 = a.step();
  (void)a.step();
  std::vector<Tensor> end_a = snapshot_params(a.models());

  TrainSession b(cfg, tiny_encoder(), tiny_disc(), src, tgt);
  (void)b.step();  // desynchronize on purpose before restoring
  b.restore(ccda::load_checkpoint(path));
  CHECK(b.current_step() == 3);
  ccda::LossReport b4 = b.step();
  for (const std::string& name : ccda::LossReport::term_order()) {
    CHECK(a4.get(name) == b4.get(name));
  }
  (void)b.step();
  CHECK(same_tensors(end_a, snapshot_params(b.models())));

  // a session built over different specs must refuse the checkpoint
  EncoderSpec other = tiny_encoder();
  other.feature_channels = 24;
  TrainSession c(cfg, other, tiny_disc(), src, tgt);
  CHECK_THROWS_AS(c.restore(ccda::load_checkpoint(path)), std::invalid_argument);
}

TEST_CASE("a poisoned parameter is reported by the first bad loss term") {
  TrainConfig cfg = tiny_config(Variant::kFull, 10);
  TrainSession session(cfg, tiny_encoder(), tiny_disc(), tiny_domain(1, 0.0),
                       tiny_domain(2, 30.0));
  for (NamedParam& p : ccda::all_params(session.models())) {
    if (p.name.rfind("disc.fine", 0) == 0 && p.name.find("bias") != std::string::npos) {
      p.var.node()->value[0] = std::numeric_limits<double>::quiet_NaN();
      break;
    }
  }
  CHECK_THROWS_WITH_AS((void)session.step(),
                       doctest::Contains("non-finite value in loss term d1"),
                       std::runtime_error);
}

TEST_CASE("the train driver writes a complete structured run directory") {
  testutil::TempDir dir("run");
  TrainConfig cfg = tiny_config(Variant::kFull, 4);
  cfg.checkpoint_every = 2;
  Dataset src = tiny_domain(1, 0.0);
  Dataset tgt = tiny_domain(2, 30.0);

  const std::string run_dir =
      ccda::train(cfg, tiny_encoder(), tiny_disc(), src, tgt, dir.sub("out"));
  CHECK(run_dir == dir.sub("out"));

  const std::string log = testutil::read_file(dir.sub("out") / "log.csv");
  REQUIRE_FALSE(log.empty());

  // header row matches the published column order
  std::string header = log.substr(0, log.find('\n'));
  std::string expected;
  for (const std::string& col : ccda::log_columns()) {
    if (!expected.empty()) expected += ",";
    expected += col;
  }
  CHECK(header == expected);

  // one row per iteration plus the header
  int lines = 0;
  for (char ch : log) {
    if (ch == '\n') ++lines;
  }
  CHECK(lines == cfg.iterations + 1);

  CHECK(std::filesystem::exists(dir.sub("out") / "checkpoints" / "step-2.ckpt"));
  CHECK(std::filesystem::exists(dir.sub("out") / "checkpoints" / "step-4.ckpt"));

  // the log is reproducible byte for byte
  const std::string run2 =
      ccda::train(cfg, tiny_encoder(), tiny_disc(), src, tgt, dir.sub("out2"));
  CHECK(testutil::read_file(run2 + "/log.csv") == log);
}

}  // TEST_SUITE

}  // namespace
