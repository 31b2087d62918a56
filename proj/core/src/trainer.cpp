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
#include "ccda/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "ccda/labels.hpp"

namespace ccda {

namespace fs = std::filesystem;

Variant variant_from_string(const std::string& name) {
  if (name == "basic") return Variant::kBasic;
  if (name == "class") return Variant::kClassConditional;
  if (name == "full") return Variant::kFull;
  throw std::invalid_argument("unknown variant '" + name + "' (expected basic, class, or full)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBasic: return "basic";
    case Variant::kClassConditional: return "class";
    case Variant::kFull: return "full";
  }
  throw std::invalid_argument("unknown variant value");
}

void validate_train_config(const TrainConfig& cfg, const EncoderSpec& enc,
                           const DiscSpec& disc) {
  if (cfg.iterations < 1) throw std::invalid_argument("train config: iterations must be >= 1");
  if (cfg.crop_height < enc.stride || cfg.crop_width < enc.stride) {
    throw std::invalid_argument("train config: crop smaller than the encoder stride");
  }
  if (cfg.crop_height % enc.stride != 0 || cfg.crop_width % enc.stride != 0) {
    throw std::invalid_argument("train config: crop size must divide by the encoder stride " +
                                std::to_string(enc.stride));
  }
  if (cfg.variant == Variant::kFull) {
    int factor = enc.stride;
    for (std::size_t i = 0; i < disc.coarse_tail_channels.size(); ++i) {
      factor *= disc.coarse_stride;
    }
    if (cfg.crop_height % factor != 0 || cfg.crop_width % factor != 0) {
      throw std::invalid_argument(
          "train config: with the coarse branch enabled the crop must divide by " +
          std::to_string(factor));
    }
  }
  if (!(cfg.sgd_lr > 0.0) || !(cfg.adam_lr > 0.0)) {
    throw std::invalid_argument("train config: learning rates must be positive");
  }
  if (cfg.sgd_momentum < 0.0 || cfg.sgd_momentum >= 1.0) {
    throw std::invalid_argument("train config: momentum must be in [0,1)");
  }
  if (cfg.weight_decay < 0.0) {
    throw std::invalid_argument("train config: weight decay must be >= 0");
  }
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) ||
      !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) {
    throw std::invalid_argument("train config: adam betas must be in [0,1)");
  }
  if (!(cfg.adam_epsilon > 0.0)) {
    throw std::invalid_argument("train config: adam epsilon must be positive");
  }
  if (cfg.lr_decay_power < 0.0) {
    throw std::invalid_argument("train config: lr decay power must be >= 0");
  }
  if (!(cfg.th_w > 0.0 && cfg.th_w < 1.0)) {
    throw std::invalid_argument("train config: th_w must be in (0,1)");
  }
  if (!(cfg.th_n > 0.0 && cfg.th_n <= 1.0)) {
    throw std::invalid_argument("train config: th_n must be in (0,1]");
  }
  if (cfg.checkpoint_every < 1) {
    throw std::invalid_argument("train config: checkpoint_every must be >= 1");
  }
  if (cfg.update_order != "es_first" && cfg.update_order != "d_first") {
    throw std::invalid_argument("train config: update_order must be es_first or d_first");
  }
  validate_weights(cfg.weights);
}

namespace {

void check_domain(const Dataset& data, const char* role, bool needs_labels) {
  auto it = data.splits.find("train");
  if (it == data.splits.end() || it->second.empty()) {
    throw std::invalid_argument(std::string(role) + " dataset has no train samples");
  }
  for (int idx : it->second) {
    if (idx < 0 || idx >= static_cast<int>(data.samples.size())) {
      throw std::invalid_argument(std::string(role) + " dataset has an out-of-range split index");
    }
    if (needs_labels && !data.samples[static_cast<std::size_t>(idx)].has_labels) {
      throw std::invalid_argument(std::string(role) + " train sample " + std::to_string(idx) +
                                  " has no labels");
    }
  }
}

double max_abs_param_grad(const std::vector<NamedParam>& params) {
  double m = 0.0;
  for (const NamedParam& p : params) {
    const Tensor& g = p.var.grad();
    if (g.empty()) continue;
    m = std::max(m, max_abs(g));
  }
  return m;
}

void zero_param_grads(const std::vector<NamedParam>& params) {
  for (const NamedParam& p : params) {
    p.var.node()->ensure_grad();
    p.var.node()->grad.fill(0.0);
  }
}

}  // namespace

TrainSession::TrainSession(const TrainConfig& cfg, const EncoderSpec& enc_spec,
                           const DiscSpec& disc_spec, Dataset source, Dataset target)
    : cfg_(cfg), source_(std::move(source)), target_(std::move(target)) {
  validate_train_config(cfg, enc_spec, disc_spec);
  check_domain(source_, "source", /*needs_labels=*/true);
  check_domain(target_, "target", /*needs_labels=*/false);
  if (source_.scene.num_classes != target_.scene.num_classes) {
    throw std::invalid_argument("source and target datasets disagree on the class count");
  }
  if (source_.scene.image_height < cfg_.crop_height ||
      source_.scene.image_width < cfg_.crop_width ||
      target_.scene.image_height < cfg_.crop_height ||
      target_.scene.image_width < cfg_.crop_width) {
    throw std::invalid_argument("crop size exceeds the dataset image size");
  }
  if (cfg_.variant == Variant::kBasic) {
    // the plain adversarial baseline: CE-only segmentation loss and no
    // class-conditional fine term
    cfg_.weights.alpha = 1.0;
    cfg_.weights.beta = 1.0;
  }
  models_ = make_models(enc_spec, disc_spec, source_.scene.num_classes, cfg_.seed);
  es_params_ = encoder_params(models_.encoder);
  for (auto& p : seg_head_params(models_.seg_head)) es_params_.push_back(p);
  d_params_ = disc_params(models_.disc);
  for (const NamedParam& p : es_params_) slots_[p.name];
  for (const NamedParam& p : d_params_) slots_[p.name];
}

double TrainSession::es_learning_rate() const {
  const double frac =
      std::max(0.0, 1.0 - static_cast<double>(step_) / static_cast<double>(cfg_.iterations));
  return cfg_.sgd_lr * std::pow(frac, cfg_.lr_decay_power);
}

double TrainSession::d_learning_rate() const {
  const double frac =
      std::max(0.0, 1.0 - static_cast<double>(step_) / static_cast<double>(cfg_.iterations));
  return cfg_.adam_lr * std::pow(frac, cfg_.lr_decay_power);
}

Sample TrainSession::crop_sample(const Dataset& data, int sample_index, Rng& rng) const {
  const Sample& s = data.samples[static_cast<std::size_t>(sample_index)];
  const int h = s.image.dim(0), w = s.image.dim(1);
  const int ch = cfg_.crop_height, cw = cfg_.crop_width;
  const int oy = h == ch ? 0 : rng.uniform_int(h - ch + 1);
  const int ox = w == cw ? 0 : rng.uniform_int(w - cw + 1);
  Sample out;
  out.image = Tensor({ch, cw, 3});
  for (int i = 0; i < ch; ++i) {
    for (int j = 0; j < cw; ++j) {
      for (int k = 0; k < 3; ++k) out.image.at(i, j, k) = s.image.at(oy + i, ox + j, k);
    }
  }
  if (s.has_labels) {
    out.labels = Tensor({ch, cw});
    for (int i = 0; i < ch; ++i) {
      for (int j = 0; j < cw; ++j) out.labels.at(i, j) = s.labels.at(oy + i, ox + j);
    }
    out.has_labels = true;
  }
  return out;
}

void TrainSession::sgd_update(double lr) {
  for (NamedParam& p : es_params_) {
    const Tensor& g = p.var.grad();
    if (g.empty()) continue;
    Tensor& w = p.var.node()->value;
    SlotState& slot = slots_[p.name];
    if (slot.sgd_velocity.empty()) slot.sgd_velocity = Tensor(w.shape());
    double* v = slot.sgd_velocity.data();
    const double* gd = g.data();
    double* wd = w.data();
    for (int i = 0; i < w.size(); ++i) {
      v[i] = cfg_.sgd_momentum * v[i] + (gd[i] + cfg_.weight_decay * wd[i]);
      wd[i] -= lr * v[i];
    }
  }
}

void TrainSession::adam_update(double lr) {
  ++adam_t_;
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
  for (NamedParam& p : d_params_) {
    const Tensor& g = p.var.grad();
    if (g.empty()) continue;
    Tensor& w = p.var.node()->value;
    SlotState& slot = slots_[p.name];
    if (slot.adam_m.empty()) slot.adam_m = Tensor(w.shape());
    if (slot.adam_v.empty()) slot.adam_v = Tensor(w.shape());
    double* m = slot.adam_m.data();
    double* v = slot.adam_v.data();
    const double* gd = g.data();
    double* wd = w.data();
    for (int i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * gd[i];
      v[i] = b2 * v[i] + (1.0 - b2) * gd[i] * gd[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      wd[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
    }
  }
}

LossReport TrainSession::step() {
  const LossWeights& w = cfg_.weights;
  const int C = models_.num_classes;
  const bool use_fine_class = cfg_.variant != Variant::kBasic;
  const bool use_coarse = cfg_.variant == Variant::kFull;
  const bool adv_active = w.lambda_s != 0.0 || w.lambda_t != 0.0;
  const bool use_disc = adv_active || (use_coarse && w.lambda_c != 0.0);

  Rng rng(derive_seed(cfg_.seed, 0x100000000ULL + static_cast<std::uint64_t>(step_)));
  const auto& src_ids = source_.splits.at("train");
  const auto& tgt_ids = target_.splits.at("train");
  const int si = src_ids[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(src_ids.size())))];
  const int ti = tgt_ids[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(tgt_ids.size())))];
  const Sample src = crop_sample(source_, si, rng);
  const Sample tgt = crop_sample(target_, ti, rng);

  // single forward pass; both phases differentiate parts of this graph
  ad::Var feat_s = encode(models_.encoder, src.image);
  ad::Var probs_s = segment(models_.seg_head, feat_s, models_.encoder_spec.stride);
  const Tensor onehot_s = one_hot(src.labels, C);

  ad::Var seg = seg_cross_entropy(probs_s, src.labels);
  ad::Var dice = dice_loss(probs_s, onehot_s, w.epsilon);
  ad::Var pred = blend_pred(seg, dice, w.alpha);

  LossReport report;
  report.set("seg_ce", ad::scalar_value(seg));
  report.set("dice", ad::scalar_value(dice));
  report.set("pred", ad::scalar_value(pred));
  for (const char* name :
       {"d1", "adv1", "d2", "adv2", "d_fine", "adv_fine", "d_coarse", "adv_coarse"}) {
    report.set(name, 0.0);
  }

  ad::Var total_es = pred;
  ad::Var total_d;
  ad::Var adv_only;

  if (use_disc) {
    ad::Var feat_t = encode(models_.encoder, tgt.image);
    ad::Var probs_t = segment(models_.seg_head, feat_t, models_.encoder_spec.stride);

    DiscOutput disc_s =
        discriminate(models_.disc, feat_s, cfg_.crop_height, cfg_.crop_width, use_coarse);
    DiscOutput disc_t =
        discriminate(models_.disc, feat_t, cfg_.crop_height, cfg_.crop_width, use_coarse);

    ad::Var d_fine, adv_fine;
    if (use_fine_class) {
      FineLosses fl = fine_losses(disc_s.fine_scores, disc_t.fine_scores, onehot_s,
                                  probs_t.value(), w, cfg_.th_n);
      report.set("d1", ad::scalar_value(fl.d1));
      report.set("adv1", ad::scalar_value(fl.adv1));
      report.set("d2", ad::scalar_value(fl.d2));
      report.set("adv2", ad::scalar_value(fl.adv2));
      d_fine = fl.d_fine;
      adv_fine = fl.adv_fine;
    } else {
      BasicDomainLosses bl = basic_domain_losses(disc_s.fine_scores, disc_t.fine_scores, w);
      report.set("d1", ad::scalar_value(bl.d1));
      report.set("adv1", ad::scalar_value(bl.adv1));
      d_fine = bl.d1;
      adv_fine = bl.adv1;
    }
    report.set("d_fine", ad::scalar_value(d_fine));
    report.set("adv_fine", ad::scalar_value(adv_fine));
    total_d = d_fine;
    total_es = ad::add(total_es, adv_fine);
    adv_only = adv_fine;

    if (use_coarse) {
      const Tensor& coarse_val = disc_s.coarse_raw.value();
      const int rows = coarse_val.dim(0), cols = coarse_val.dim(1);
      const PatchGrid grid = make_patch_grid(cfg_.crop_height, cfg_.crop_width,
                                             cfg_.crop_height / rows, cfg_.crop_width / cols);
      const Tensor w_src = coarse_labels_from_truth(src.labels, grid, C);
      const Tensor w_tgt = coarse_labels_from_prediction(probs_t.value(), grid, cfg_.th_w);
      CoarseScorePair on_src{ad::slice_channels(disc_s.coarse_raw, 0, C),
                            ad::slice_channels(disc_s.coarse_raw, C, 2 * C)};
      CoarseScorePair on_tgt{ad::slice_channels(disc_t.coarse_raw, 0, C),
                            ad::slice_channels(disc_t.coarse_raw, C, 2 * C)};
      CoarseLosses cl = coarse_losses(on_src, on_tgt, w_src, w_tgt, w);
      report.set("d_coarse", ad::scalar_value(cl.d_coarse));
      report.set("adv_coarse", ad::scalar_value(cl.adv_coarse));
      total_d = ad::add(total_d, cl.d_coarse);
      total_es = ad::add(total_es, cl.adv_coarse);
      adv_only = ad::add(adv_only, cl.adv_coarse);
    }
  }

  report = compose_totals(report);
  for (const std::string& name : LossReport::term_order()) {
    if (!std::isfinite(report.get(name))) {
      throw std::runtime_error("train step " + std::to_string(step_) +
                               ": non-finite value in loss term " + name);
    }
  }

  const double lr_es = es_learning_rate();
  const double lr_d = d_learning_rate();
  diag_ = StepDiagnostics{};

  // E,S phase: discriminator frozen, gradients still flow through it
  set_trainable(es_params_, true);
  set_trainable(d_params_, false);
  if (diagnostics_on_) {
    zero_param_grads(d_params_);
    if (adv_only.defined()) {
      ad::backward(adv_only);
      diag_.encoder_grad_from_adv = max_abs_param_grad(encoder_params(models_.encoder));
    }
  }
  ad::backward(total_es);
  if (diagnostics_on_) diag_.disc_grad_during_es = max_abs_param_grad(d_params_);
  if (cfg_.update_order == "es_first") sgd_update(lr_es);

  // D phase: encoder and decoder frozen, so their inputs are effectively
  // detached from the discriminator objective
  if (total_d.defined()) {
    set_trainable(es_params_, false);
    set_trainable(d_params_, true);
    if (diagnostics_on_) zero_param_grads(es_params_);
    ad::backward(total_d);
    if (diagnostics_on_) diag_.es_grad_during_d = max_abs_param_grad(es_params_);
    adam_update(lr_d);
  }
  if (cfg_.update_order != "es_first") sgd_update(lr_es);

  set_trainable(es_params_, false);
  set_trainable(d_params_, false);
  if (diagnostics_on_) diag_.valid = true;
  ++step_;
  return report;
}

void TrainSession::save(const std::string& path) {
  std::map<std::string, Tensor> extra;
  for (const NamedParam& p : es_params_) {
    const SlotState& slot = slots_[p.name];
    if (!slot.sgd_velocity.empty()) extra.emplace("opt.sgd." + p.name + ".v", slot.sgd_velocity);
  }
  for (const NamedParam& p : d_params_) {
    const SlotState& slot = slots_[p.name];
    if (!slot.adam_m.empty()) extra.emplace("opt.adam." + p.name + ".m", slot.adam_m);
    if (!slot.adam_v.empty()) extra.emplace("opt.adam." + p.name + ".v", slot.adam_v);
  }
  Tensor t({1});
  t.data()[0] = static_cast<double>(adam_t_);
  extra.emplace("opt.adam.t", t);
  save_checkpoint(path, models_, step_, extra);
}

void TrainSession::restore(const Checkpoint& ckpt) {
  if (!(ckpt.models.encoder_spec == models_.encoder_spec) ||
      !(ckpt.models.disc_spec == models_.disc_spec) ||
      ckpt.models.num_classes != models_.num_classes) {
    throw std::invalid_argument("restore: checkpoint specs do not match this session");
  }
  Models rebuilt = ckpt.models;  // shares nodes with the checkpoint object
  std::vector<NamedParam> from = all_params(rebuilt);
  std::vector<NamedParam> to = all_params(models_);
  for (std::size_t i = 0; i < from.size(); ++i) {
    to[i].var.node()->value = from[i].var.value();
  }
  for (auto& [name, slot] : slots_) {
    slot = SlotState{};
    auto v = ckpt.extra.find("opt.sgd." + name + ".v");
    if (v != ckpt.extra.end()) slot.sgd_velocity = v->second;
    auto m = ckpt.extra.find("opt.adam." + name + ".m");
    if (m != ckpt.extra.end()) slot.adam_m = m->second;
    auto av = ckpt.extra.find("opt.adam." + name + ".v");
    if (av != ckpt.extra.end()) slot.adam_v = av->second;
  }
  auto t = ckpt.extra.find("opt.adam.t");
  adam_t_ = t != ckpt.extra.end() ? static_cast<std::int64_t>(t->second.data()[0]) : 0;
  step_ = ckpt.step;
}

std::vector<std::string> log_columns() {
  std::vector<std::string> cols = {"step", "lr_es", "lr_d"};
  for (const std::string& t : LossReport::term_order()) cols.push_back(t);
  return cols;
}

std::string train(const TrainConfig& cfg, const EncoderSpec& enc_spec, const DiscSpec& disc_spec,
                  const Dataset& source, const Dataset& target, const std::string& run_dir) {
  TrainSession session(cfg, enc_spec, disc_spec, source, target);
  std::error_code ec;
  fs::create_directories(fs::path(run_dir) / "checkpoints", ec);
  if (ec) {
    throw std::runtime_error("train: cannot create run directory " + run_dir + ": " +
                             ec.message());
  }
  const std::string log_path = (fs::path(run_dir) / "log.csv").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot open " + log_path + " for writing");

  const std::vector<std::string> cols = log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) log << (i ? "," : "") << cols[i];
  log << "\n";

  char buf[64];
  for (int it = 0; it < cfg.iterations; ++it) {
    const double lr_es = session.es_learning_rate();
    const double lr_d = session.d_learning_rate();
    LossReport report = session.step();
    log << it;
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", lr_es, lr_d);
    log << buf;
    for (const std::string& t : LossReport::term_order()) {
      std::snprintf(buf, sizeof(buf), ",%.17g", report.get(t));
      log << buf;
    }
    log << "\n";
    const std::int64_t done = session.current_step();
    if (done % cfg.checkpoint_every == 0 || it + 1 == cfg.iterations) {
      const std::string ckpt_path =
          (fs::path(run_dir) / "checkpoints" / ("step-" + std::to_string(done) + ".ckpt"))
              .string();
      session.save(ckpt_path);
    }
  }
  log.flush();
  if (!log) throw std::runtime_error("train: failed writing " + log_path);
  return run_dir;
}

}  // namespace ccda
