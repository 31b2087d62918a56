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
#ifndef CCDA_TRAINER_HPP_
#define CCDA_TRAINER_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccda/datagen.hpp"
#include "ccda/losses.hpp"
#include "ccda/nets.hpp"

namespace ccda {

// the ablation ladder rows, from plain adversarial adaptation to the full
// class-conditional method
enum class Variant { kBasic, kClassConditional, kFull };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct TrainConfig {
  Variant variant = Variant::kFull;
  int iterations = 1500;
  int crop_height = 64;
  int crop_width = 64;
  double sgd_lr = 2.5e-4;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;
  double adam_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_epsilon = 1e-8;
  double lr_decay_power = 0.9;
  std::uint64_t seed = 1;
  LossWeights weights;
  double th_w = 0.9;  // coarse presence threshold on predicted probabilities
  double th_n = 0.5;  // pixels with max probability below this count as uncertain
  int checkpoint_every = 500;
  // "es_first" or "d_first"; both updates are computed from the same forward
  // pass, so the order is recorded but does not change the arithmetic
  std::string update_order = "es_first";
};

// crop must divide by the encoder stride, and by the coarse branch's total
// downsampling of the feature map when the variant uses the coarse head
void validate_train_config(const TrainConfig& cfg, const EncoderSpec& enc, const DiscSpec& disc);

// per-step invariants measured when diagnostics are enabled
struct StepDiagnostics {
  // max |grad| that the E,S backward pass deposited on any discriminator
  // parameter (must be exactly 0: the discriminator is frozen then)
  double disc_grad_during_es = 0.0;
  // max |grad| that the D backward pass deposited on any encoder or
  // segmentation parameter (must be exactly 0: those are frozen then)
  double es_grad_during_d = 0.0;
  // max |adversarial-only gradient| reaching encoder parameters during the
  // E,S phase; positive when adversarial terms are active (they must flow
  // through the frozen discriminator into the encoder)
  double encoder_grad_from_adv = 0.0;
  bool valid = false;
};

class TrainSession {
 public:
  // datasets are copied in; source must have labeled "train" samples, target
  // must have a non-empty "train" split (labels ignored if present)
  TrainSession(const TrainConfig& cfg, const EncoderSpec& enc_spec, const DiscSpec& disc_spec,
               Dataset source, Dataset target);

  // runs one alternating optimization step and returns the itemized report
  // (every term of LossReport::term_order, zeros for terms the variant
  // disables); throws on non-finite losses naming the offending term
  LossReport step();

  const TrainConfig& config() const { return cfg_; }
  Models& models() { return models_; }
  const Models& models() const { return models_; }
  std::int64_t current_step() const { return step_; }

  double es_learning_rate() const;  // poly-decayed rate the next step will use
  double d_learning_rate() const;

  void save(const std::string& path);  // checkpoint with optimizer state
  // adopts parameters, optimizer state, and step counter; throws if the
  // checkpoint's specs differ from this session's
  void restore(const Checkpoint& ckpt);

  void enable_diagnostics(bool on) { diagnostics_on_ = on; }
  const StepDiagnostics& diagnostics() const { return diag_; }

 private:
  struct SlotState {
    Tensor sgd_velocity;
    Tensor adam_m;
    Tensor adam_v;
  };

  void sgd_update(double lr);
  void adam_update(double lr);
  Sample crop_sample(const Dataset& data, int sample_index, Rng& rng) const;

  TrainConfig cfg_;
  Dataset source_;
  Dataset target_;
  Models models_;
  std::vector<NamedParam> es_params_;
  std::vector<NamedParam> d_params_;
  std::map<std::string, SlotState> slots_;
  std::int64_t step_ = 0;
  std::int64_t adam_t_ = 0;
  bool diagnostics_on_ = false;
  StepDiagnostics diag_;
};

// Executes cfg.iterations steps, writing log.csv (one row per step: step,
// both learning rates, every loss term), checkpoints/step-N.ckpt every
// cfg.checkpoint_every steps and at the end, and returns the run directory.
// The caller provides run_dir; it is created if missing.
std::string train(const TrainConfig& cfg, const EncoderSpec& enc_spec, const DiscSpec& disc_spec,
                  const Dataset& source, const Dataset& target, const std::string& run_dir);

// the exact header used by log.csv, in column order
std::vector<std::string> log_columns();

}  // namespace ccda

#endif  // CCDA_TRAINER_HPP_
