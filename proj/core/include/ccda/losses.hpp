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
#ifndef CCDA_LOSSES_HPP_
#define CCDA_LOSSES_HPP_

#include <map>
#include <string>
#include <vector>

#include "ccda/autodiff.hpp"
#include "ccda/tensor.hpp"

namespace ccda {

// scores are clamped into [floor, 1-floor] before any logarithm
inline constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double lambda_s = 3e-4;   // source-domain adversarial weight
  double lambda_t = 3e-4;   // target-domain adversarial weight
  double lambda_c = 1e-3;   // coarse patch-classification weight
  double lambda_n = 1.0;    // uncertain-region weight
  double alpha = 0.7;       // cross-entropy share of the prediction loss
  double beta = 0.5;        // plain-domain share of the fine blend
  double epsilon = 1e-5;    // denominator guard
};

void validate_weights(const LossWeights& w);

// Itemized scalar loss terms of one training step, in a fixed emission order.
struct LossReport {
  std::map<std::string, double> terms;

  static const std::vector<std::string>& term_order();
  bool has(const std::string& name) const { return terms.count(name) != 0; }
  double get(const std::string& name) const;
  void set(const std::string& name, double v) { terms[name] = v; }
};

// Fills total_D = d_fine + d_coarse and total_ES = pred + adv_fine +
// adv_coarse; throws if a component is missing.
LossReport compose_totals(LossReport report);

// --- segmentation path ------------------------------------------------------

// Mean over non-ignore pixels of -log P[pixel's true class].
ad::Var seg_cross_entropy(const ad::Var& probs, const Tensor& truth_labels);

// 1 - mean_c of 2*sum(Y_c*P_c) / (sum(Y_c) + sum(P_c) + eps). A class with
// no ground-truth pixels and no probability mass contributes exactly zero.
ad::Var dice_loss(const ad::Var& probs, const Tensor& truth_onehot, double eps);

// alpha*seg + (1-alpha)*dice; exact at the endpoints.
ad::Var blend_pred(const ad::Var& seg_ce, const ad::Var& dice, double alpha);

// --- fine-scale domain path ---------------------------------------------------

// Per-location binary cross entropy of a sigmoid score map against a
// constant domain label, averaged over locations.
ad::Var domain_bce(const ad::Var& score_map, double domain_label);

struct BasicDomainLosses {
  ad::Var d1;    // discriminator target: source->0, target->1
  ad::Var adv1;  // flipped targets
};
BasicDomainLosses basic_domain_losses(const ad::Var& score_map_src, const ad::Var& score_map_tgt,
                                      const LossWeights& w);

// Class-conditional BCE: per-class masked mean over the pixels the class
// occupies (count-invariant by construction), averaged over all C classes.
ad::Var fine_cbce_source(const ad::Var& score_map, const Tensor& truth_onehot, int domain_label,
                         double eps);

// Same class-averaged term on pseudo-labels, plus lambda_n times the
// uncertain-pixel masked mean BCE.
ad::Var fine_cbce_target(const ad::Var& score_map, const Tensor& pseudo_onehot,
                         const Tensor& uncertain_mask, int domain_label, double lambda_n,
                         double eps);

struct FineLosses {
  ad::Var d1, adv1;      // plain domain BCE on the same upsampled maps
  ad::Var d2, adv2;      // class-conditional variants
  ad::Var d_fine;        // beta*d1 + (1-beta)*d2
  ad::Var adv_fine;      // beta*adv1 + (1-beta)*adv2
};
// probs_tgt is consumed only to derive pseudo-labels and the uncertainty
// mask; no gradient flows through it.
FineLosses fine_losses(const ad::Var& score_map_src, const ad::Var& score_map_tgt,
                       const Tensor& truth_onehot_src, const Tensor& probs_tgt,
                       const LossWeights& w, double th_n);

// --- coarse-scale domain path -------------------------------------------------

// The coarse discriminator head emits 2C channels per patch; the first C
// score "class c here looks source", the last C "class c here looks target".
struct CoarseScorePair {
  ad::Var source_half;  // rows x cols x C raw scores
  ad::Var target_half;  // rows x cols x C raw scores
};

struct CoarseLosses {
  ad::Var d_coarse;
  ad::Var adv_coarse;
  // auxiliary per-patch quantities (values only, detached)
  Tensor presence_src, presence_tgt;            // sigmoid(source_half + target_half)
  Tensor domain_softmax_src, domain_softmax_tgt;  // rows x cols x 2C; per-class pair sums to 1
};

// presence_truth_src gates the source adversarial term; the target term is
// weighted by the patch's own predicted presence, treated as a constant.
// Tests may pin that constant via target_adv_weight to make the loss a pure
// function of its score inputs.
CoarseLosses coarse_losses(const CoarseScorePair& on_source, const CoarseScorePair& on_target,
                           const Tensor& presence_truth_src, const Tensor& presence_pred_tgt,
                           const LossWeights& w, const Tensor* target_adv_weight = nullptr);

}  // namespace ccda

#endif  // CCDA_LOSSES_HPP_
