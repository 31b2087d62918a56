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
#include "ccda/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "ccda/datagen.hpp"
#include "ccda/labels.hpp"

namespace ccda {

namespace {

ad::Var clamp_scores(const ad::Var& s) { return ad::clamp(s, kProbFloor, 1.0 - kProbFloor); }

// elementwise -log(u) for label 1, -log(1-u) for label 0
ad::Var bce_map(const ad::Var& scores, double domain_label) {
  if (domain_label != 0.0 && domain_label != 1.0) {
    throw std::invalid_argument("domain label must be 0 or 1");
  }
  ad::Var u = clamp_scores(scores);
  if (domain_label == 1.0) return ad::neg(ad::log(u));
  return ad::neg(ad::log(ad::apply_unary(
      u, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; })));
}

// elementwise BCE of probabilities p against a same-shaped {0,1} tensor
ad::Var bce_vs_targets(const ad::Var& p, const Tensor& targets) {
  Tensor flipped(targets.shape());
  for (std::int64_t i = 0; i < targets.size(); ++i) {
    const double t = targets[i];
    if (t != 0.0 && t != 1.0) throw std::invalid_argument("presence targets must be binary");
    flipped[i] = 1.0 - t;
  }
  ad::Var pc = clamp_scores(p);
  ad::Var pos = ad::weighted_sum(ad::neg(ad::log(pc)), targets);
  ad::Var neg_part = ad::weighted_sum(
      ad::neg(ad::log(ad::apply_unary(
          pc, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; }))),
      flipped);
  return ad::add(pos, neg_part);  // summed, not averaged
}

// per-class masked mean of a BCE map, averaged over all C classes
ad::Var class_masked_mean(const ad::Var& bce, const Tensor& onehot, double eps) {
  const int h = onehot.dim(0), w = onehot.dim(1), c = onehot.dim(2);
  if (bce.value().rank() != 2 || bce.value().dim(0) != h || bce.value().dim(1) != w) {
    throw std::invalid_argument("score map and one-hot mask disagree on spatial size");
  }
  ad::Var acc = ad::scalar(0.0);
  for (int k = 0; k < c; ++k) {
    Tensor mask({h, w});
    double count = 0.0;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        mask.at(i, j) = onehot.at(i, j, k);
        count += onehot.at(i, j, k);
      }
    }
    acc = ad::add(acc, ad::scale(ad::weighted_sum(bce, mask), 1.0 / (count + eps)));
  }
  return ad::scale(acc, 1.0 / c);
}

void check_score_map(const ad::Var& v, const char* who) {
  if (!v.defined() || v.value().rank() != 2) {
    throw std::invalid_argument(std::string(who) + ": HxW score map expected");
  }
}

}  // namespace

void validate_weights(const LossWeights& w) {
  if (!(w.alpha >= 0.0 && w.alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0,1]");
  if (!(w.beta >= 0.0 && w.beta <= 1.0)) throw std::invalid_argument("beta must be in [0,1]");
  if (!(w.epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (w.lambda_s < 0.0 || w.lambda_t < 0.0 || w.lambda_c < 0.0 || w.lambda_n < 0.0) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
}

const std::vector<std::string>& LossReport::term_order() {
  static const std::vector<std::string> order = {
      "seg_ce", "dice", "pred", "d1", "adv1", "d2", "adv2", "d_fine",
      "adv_fine", "d_coarse", "adv_coarse", "total_D", "total_ES"};
  return order;
}

double LossReport::get(const std::string& name) const {
  auto it = terms.find(name);
  if (it == terms.end()) throw std::invalid_argument("loss report has no term '" + name + "'");
  return it->second;
}

LossReport compose_totals(LossReport report) {
  report.set("total_D", report.get("d_fine") + report.get("d_coarse"));
  report.set("total_ES", report.get("pred") + report.get("adv_fine") + report.get("adv_coarse"));
  return report;
}

ad::Var seg_cross_entropy(const ad::Var& probs, const Tensor& truth_labels) {
  validate_probs(probs.value());
  const int h = probs.value().dim(0), w = probs.value().dim(1), c = probs.value().dim(2);
  if (truth_labels.rank() != 2 || truth_labels.dim(0) != h || truth_labels.dim(1) != w) {
    throw std::invalid_argument("seg_cross_entropy: truth map size mismatch");
  }
  Tensor idx({h, w});
  std::int64_t valid = 0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int cls = static_cast<int>(truth_labels.at(i, j));
      if (cls == kIgnoreLabel) {
        idx.at(i, j) = -1.0;  // gathers 1.0, i.e. zero log-loss
      } else if (cls < 0 || cls >= c) {
        throw std::invalid_argument("seg_cross_entropy: class " + std::to_string(cls) +
                                    " out of range");
      } else {
        idx.at(i, j) = static_cast<double>(cls);
        ++valid;
      }
    }
  }
  if (valid == 0) throw std::invalid_argument("seg_cross_entropy: every pixel is ignored");
  ad::Var picked = ad::gather_channel(probs, idx);
  ad::Var logs = ad::log(ad::clamp(picked, kProbFloor, 1e30));
  return ad::scale(ad::sum(logs), -1.0 / static_cast<double>(valid));
}

ad::Var dice_loss(const ad::Var& probs, const Tensor& truth_onehot, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("dice_loss: eps must be > 0");
  if (!probs.value().same_shape(truth_onehot)) {
    throw std::invalid_argument("dice_loss: shape mismatch " + probs.value().shape_str() + " vs " +
                                truth_onehot.shape_str());
  }
  const int h = truth_onehot.dim(0), w = truth_onehot.dim(1), c = truth_onehot.dim(2);
  ad::Var acc = ad::scalar(0.0);
  for (int k = 0; k < c; ++k) {
    Tensor mask({h, w});
    double truth_count = 0.0;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        mask.at(i, j) = truth_onehot.at(i, j, k);
        truth_count += truth_onehot.at(i, j, k);
      }
    }
    ad::Var pc = ad::channel(probs, k);
    ad::Var overlap = ad::scale(ad::weighted_sum(pc, mask), 2.0);
    ad::Var denom = ad::add_scalar(ad::sum(pc), truth_count + eps);
    acc = ad::add(acc, ad::divide(overlap, denom));
  }
  return ad::sub(ad::scalar(1.0), ad::scale(acc, 1.0 / c));
}

ad::Var blend_pred(const ad::Var& seg_ce, const ad::Var& dice, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0,1]");
  return ad::add(ad::scale(seg_ce, alpha), ad::scale(dice, 1.0 - alpha));
}

ad::Var domain_bce(const ad::Var& score_map, double domain_label) {
  check_score_map(score_map, "domain_bce");
  return ad::mean(bce_map(score_map, domain_label));
}

BasicDomainLosses basic_domain_losses(const ad::Var& score_map_src, const ad::Var& score_map_tgt,
                                      const LossWeights& w) {
  validate_weights(w);
  BasicDomainLosses out;
  out.d1 = ad::add(ad::scale(domain_bce(score_map_src, 0.0), w.lambda_s),
                   ad::scale(domain_bce(score_map_tgt, 1.0), w.lambda_t));
  out.adv1 = ad::add(ad::scale(domain_bce(score_map_src, 1.0), w.lambda_s),
                     ad::scale(domain_bce(score_map_tgt, 0.0), w.lambda_t));
  return out;
}

ad::Var fine_cbce_source(const ad::Var& score_map, const Tensor& truth_onehot, int domain_label,
                         double eps) {
  check_score_map(score_map, "fine_cbce_source");
  if (!(eps > 0.0)) throw std::invalid_argument("fine_cbce_source: eps must be > 0");
  return class_masked_mean(bce_map(score_map, domain_label), truth_onehot, eps);
}

ad::Var fine_cbce_target(const ad::Var& score_map, const Tensor& pseudo_onehot,
                         const Tensor& uncertain_mask, int domain_label, double lambda_n,
                         double eps) {
  check_score_map(score_map, "fine_cbce_target");
  if (!(eps > 0.0)) throw std::invalid_argument("fine_cbce_target: eps must be > 0");
  if (uncertain_mask.rank() != 2 || uncertain_mask.dim(0) != pseudo_onehot.dim(0) ||
      uncertain_mask.dim(1) != pseudo_onehot.dim(1)) {
    throw std::invalid_argument("fine_cbce_target: uncertainty mask size mismatch");
  }
  ad::Var bce = bce_map(score_map, domain_label);
  ad::Var class_term = class_masked_mean(bce, pseudo_onehot, eps);
  double masked = 0.0;
  for (std::int64_t i = 0; i < uncertain_mask.size(); ++i) masked += uncertain_mask[i];
  ad::Var uncertain_term =
      ad::scale(ad::weighted_sum(bce, uncertain_mask), lambda_n / (masked + eps));
  return ad::add(class_term, uncertain_term);
}

FineLosses fine_losses(const ad::Var& score_map_src, const ad::Var& score_map_tgt,
                       const Tensor& truth_onehot_src, const Tensor& probs_tgt,
                       const LossWeights& w, double th_n) {
  validate_weights(w);
  const int c = truth_onehot_src.dim(2);
  const Tensor pseudo = pseudo_labels(probs_tgt);
  const Tensor pseudo_onehot = one_hot(pseudo, c);
  const Tensor mask = uncertainty_mask(probs_tgt, th_n);

  FineLosses out;
  BasicDomainLosses basic = basic_domain_losses(score_map_src, score_map_tgt, w);
  out.d1 = basic.d1;
  out.adv1 = basic.adv1;
  out.d2 = ad::add(
      ad::scale(fine_cbce_source(score_map_src, truth_onehot_src, 0, w.epsilon), w.lambda_s),
      ad::scale(fine_cbce_target(score_map_tgt, pseudo_onehot, mask, 1, w.lambda_n, w.epsilon),
                w.lambda_t));
  out.adv2 = ad::add(
      ad::scale(fine_cbce_source(score_map_src, truth_onehot_src, 1, w.epsilon), w.lambda_s),
      ad::scale(fine_cbce_target(score_map_tgt, pseudo_onehot, mask, 0, w.lambda_n, w.epsilon),
                w.lambda_t));
  out.d_fine = ad::add(ad::scale(out.d1, w.beta), ad::scale(out.d2, 1.0 - w.beta));
  out.adv_fine = ad::add(ad::scale(out.adv1, w.beta), ad::scale(out.adv2, 1.0 - w.beta));
  return out;
}

namespace {

void check_coarse_pair(const CoarseScorePair& pair, const Tensor& presence, const char* who) {
  if (!pair.source_half.defined() || !pair.target_half.defined() ||
      pair.source_half.value().rank() != 3 ||
      !pair.source_half.value().same_shape(pair.target_half.value()) ||
      !pair.source_half.value().same_shape(presence)) {
    throw std::invalid_argument(std::string(who) +
                                ": score halves and presence must share rows x cols x C");
  }
}

Tensor pair_softmax_values(const Tensor& src_half, const Tensor& tgt_half) {
  const int r = src_half.dim(0), c = src_half.dim(1), k = src_half.dim(2);
  Tensor out({r, c, 2 * k});
  auto sig = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      for (int q = 0; q < k; ++q) {
        const double d = src_half.at(i, j, q) - tgt_half.at(i, j, q);
        out.at(i, j, q) = sig(d);
        out.at(i, j, k + q) = sig(-d);
      }
    }
  }
  return out;
}

}  // namespace

CoarseLosses coarse_losses(const CoarseScorePair& on_source, const CoarseScorePair& on_target,
                           const Tensor& presence_truth_src, const Tensor& presence_pred_tgt,
                           const LossWeights& w, const Tensor* target_adv_weight) {
  validate_weights(w);
  check_coarse_pair(on_source, presence_truth_src, "coarse_losses(source)");
  check_coarse_pair(on_target, presence_pred_tgt, "coarse_losses(target)");

  CoarseLosses out;
  ad::Var pres_src = ad::sigmoid(ad::add(on_source.source_half, on_source.target_half));
  ad::Var pres_tgt = ad::sigmoid(ad::add(on_target.source_half, on_target.target_half));
  out.presence_src = pres_src.value();
  out.presence_tgt = pres_tgt.value();
  out.domain_softmax_src =
      pair_softmax_values(on_source.source_half.value(), on_source.target_half.value());
  out.domain_softmax_tgt =
      pair_softmax_values(on_target.source_half.value(), on_target.target_half.value());

  // patch-presence classification, averaged over both domains' patch-class
  // entries; minimized by every module
  const double n_entries =
      static_cast<double>(presence_truth_src.size() + presence_pred_tgt.size());
  ad::Var cls = ad::scale(ad::add(bce_vs_targets(pres_src, presence_truth_src),
                                  bce_vs_targets(pres_tgt, presence_pred_tgt)),
                          1.0 / n_entries);

  // -log of the per-class two-way softmax: assigning to source costs
  // softplus(t-s), assigning to target costs softplus(s-t)
  ad::Var src_cost_as_src = ad::softplus(ad::sub(on_source.target_half, on_source.source_half));
  ad::Var src_cost_as_tgt = ad::softplus(ad::sub(on_source.source_half, on_source.target_half));
  ad::Var tgt_cost_as_tgt = ad::softplus(ad::sub(on_target.source_half, on_target.target_half));
  ad::Var tgt_cost_as_src = ad::softplus(ad::sub(on_target.target_half, on_target.source_half));

  // the target patches gate their own adversarial term by predicted
  // presence, held constant so only the domain scores receive gradient
  Tensor tgt_weight = target_adv_weight ? *target_adv_weight : out.presence_tgt;
  if (!tgt_weight.same_shape(presence_pred_tgt)) {
    throw std::invalid_argument("coarse_losses: target weight shape mismatch");
  }

  const double n_src = static_cast<double>(presence_truth_src.dim(0) * presence_truth_src.dim(1));
  const double n_tgt = static_cast<double>(presence_pred_tgt.dim(0) * presence_pred_tgt.dim(1));
  auto src_term = [&](const ad::Var& cost) {
    return ad::scale(ad::weighted_sum(cost, presence_truth_src), 1.0 / n_src);
  };
  auto tgt_term = [&](const ad::Var& cost) {
    return ad::scale(ad::weighted_sum(cost, tgt_weight), 1.0 / n_tgt);
  };

  out.d_coarse = ad::add(
      ad::scale(cls, w.lambda_c),
      ad::add(ad::scale(src_term(src_cost_as_src), w.lambda_s),
              ad::scale(tgt_term(tgt_cost_as_tgt), w.lambda_t)));
  out.adv_coarse = ad::add(
      ad::scale(cls, w.lambda_c),
      ad::add(ad::scale(src_term(src_cost_as_tgt), w.lambda_s),
              ad::scale(tgt_term(tgt_cost_as_src), w.lambda_t)));
  return out;
}

}  // namespace ccda
