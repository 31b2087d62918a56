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
#include "ccda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ccda/datagen.hpp"
#include "ccda/labels.hpp"
#include "ccda/losses.hpp"
#include "ccda/rng.hpp"

namespace ccda {

double max_rel_grad_error(std::vector<ad::Var>& params, const std::function<ad::Var()>& build,
                          double step, bool inject_sign_flip) {
  if (params.empty()) throw std::invalid_argument("gradient check requires at least one input");
  for (auto& p : params) p.set_trainable(true);
  ad::Var loss = build();
  ad::backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    Tensor g = p.grad();
    if (inject_sign_flip) {
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = -g[i];
    }
    analytic.push_back(std::move(g));
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& v = const_cast<Tensor&>(params[pi].value());
    for (std::int64_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + step;
      const double fp = ad::scalar_value(build());
      v[i] = orig - step;
      const double fm = ad::scalar_value(build());
      v[i] = orig;
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[pi][i];
      // the floor keeps finite-difference roundoff on near-zero gradients
      // from registering as relative error
      const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-4});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

struct Instance {
  Rng rng;
  int h, w, c;

  explicit Instance(std::uint64_t seed, const GradCheckOptions& opt) : rng(seed) {
    h = 2 + static_cast<int>(rng.uniform_int(std::max(1, opt.max_h - 1)));
    w = 2 + static_cast<int>(rng.uniform_int(std::max(1, opt.max_w - 1)));
    c = 2 + static_cast<int>(rng.uniform_int(std::max(1, opt.max_c - 1)));
  }

  Tensor normals(std::vector<int> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
  }

  // strictly interior sigmoid scores, away from the clamping boundary
  Tensor scores(std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const double x = 1.5 * rng.normal();
      t[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return t;
  }

  Tensor simplex() {
    Tensor t({h, w, c});
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double z = 0.0;
        for (int k = 0; k < c; ++k) {
          const double e = std::exp(rng.normal());
          t.at(i, j, k) = e;
          z += e;
        }
        for (int k = 0; k < c; ++k) t.at(i, j, k) /= z;
      }
    }
    return t;
  }

  Tensor labels(double ignore_fraction) {
    Tensor t({h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t[i] = rng.uniform() < ignore_fraction ? static_cast<double>(kIgnoreLabel)
                                             : static_cast<double>(rng.uniform_int(c));
    }
    // keep at least one scored pixel
    t[0] = 0.0;
    return t;
  }

  Tensor binary(std::vector<int> shape, double p_one) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform() < p_one ? 1.0 : 0.0;
    return t;
  }
};

using CaseFn = std::function<double(Instance&, const GradCheckOptions&)>;

double check(std::vector<ad::Var> params, const std::function<ad::Var()>& build,
             const GradCheckOptions& opt) {
  return max_rel_grad_error(params, build, opt.step, opt.inject_sign_flip);
}

// shared fixture for everything downstream of the fine and coarse score maps
struct FullFixture {
  ad::Var u_s, u_t;
  Tensor onehot_s, probs_t;
  CoarseScorePair on_src, on_tgt;
  Tensor w_src, w_tgt, tgt_weight;
  LossWeights weights;
  int grid_r = 2, grid_c = 2;

  FullFixture(Instance& in) {
    u_s = ad::Var(in.scores({in.h, in.w}));
    u_t = ad::Var(in.scores({in.h, in.w}));
    onehot_s = one_hot(in.labels(0.0), in.c);
    probs_t = in.simplex();
    on_src = {ad::Var(in.normals({grid_r, grid_c, in.c})),
              ad::Var(in.normals({grid_r, grid_c, in.c}))};
    on_tgt = {ad::Var(in.normals({grid_r, grid_c, in.c})),
              ad::Var(in.normals({grid_r, grid_c, in.c}))};
    w_src = in.binary({grid_r, grid_c, in.c}, 0.6);
    w_tgt = in.binary({grid_r, grid_c, in.c}, 0.6);
    // pin the target presence weight so the coarse losses stay pure
    // functions of their probed inputs
    ad::NoGradGuard ng;
    CoarseLosses probe = coarse_losses(on_src, on_tgt, w_src, w_tgt, weights);
    tgt_weight = probe.presence_tgt;
    weights.lambda_s = 0.7;
    weights.lambda_t = 0.9;
    weights.lambda_c = 0.8;
  }

  std::vector<ad::Var> score_params() { return {u_s, u_t}; }
  std::vector<ad::Var> coarse_params() {
    return {on_src.source_half, on_src.target_half, on_tgt.source_half, on_tgt.target_half};
  }
  FineLosses fine() { return fine_losses(u_s, u_t, onehot_s, probs_t, weights, 0.5); }
  CoarseLosses coarse() {
    return coarse_losses(on_src, on_tgt, w_src, w_tgt, weights, &tgt_weight);
  }
};

std::vector<std::pair<std::string, CaseFn>> build_cases() {
  std::vector<std::pair<std::string, CaseFn>> cases;
  cases.reserve(16);

  cases.emplace_back("seg_cross_entropy", [](Instance& in, const GradCheckOptions& opt) {
    ad::Var probs(in.simplex());
    Tensor truth = in.labels(0.15);
    return check({probs}, [&] { return seg_cross_entropy(probs, truth); }, opt);
  });

  cases.emplace_back("dice_loss", [](Instance& in, const GradCheckOptions& opt) {
    ad::Var probs(in.simplex());
    Tensor onehot = one_hot(in.labels(0.0), in.c);
    return check({probs}, [&] { return dice_loss(probs, onehot, 1e-5); }, opt);
  });

  cases.emplace_back("blend_pred", [](Instance& in, const GradCheckOptions& opt) {
    ad::Var a(Tensor::from_data({1}, {0.5 + in.rng.uniform()}));
    ad::Var b(Tensor::from_data({1}, {0.5 + in.rng.uniform()}));
    const double alpha = in.rng.uniform();
    return check({a, b}, [&] { return blend_pred(a, b, alpha); }, opt);
  });

  cases.emplace_back("domain_bce_d", [](Instance& in, const GradCheckOptions& opt) {
    FullFixture f(in);
    return check(f.score_params(),
                 [&] { return basic_domain_losses(f.u_s, f.u_t, f.weights).d1; }, opt);
  });
  cases.emplace_back("domain_bce_adv", [](Instance& in, const GradCheckOptions& opt) {
    FullFixture f(in);
    return check(f.score_params(),
                 [&] { return basic_domain_losses(f.u_s, f.u_t, f.weights).adv1; }, opt);
  });

  cases.emplace_back("fine_cbce_source", [](Instance& in, const GradCheckOptions& opt) {
    ad::Var u(in.scores({in.h, in.w}));
    Tensor onehot = one_hot(in.labels(0.0), in.c);
    const int l_d = in.rng.uniform_int(2) ? 1 : 0;
    return check({u}, [&] { return fine_cbce_source(u, onehot, l_d, 1e-5); }, opt);
  });

  cases.emplace_back("fine_cbce_target", [](Instance& in, const GradCheckOptions& opt) {
    ad::Var u(in.scores({in.h, in.w}));
    Tensor probs = in.simplex();
    Tensor onehot = one_hot(pseudo_labels(probs), in.c);
    Tensor mask = uncertainty_mask(probs, 0.6);
    const int l_d = in.rng.uniform_int(2) ? 1 : 0;
    return check({u}, [&] { return fine_cbce_target(u, onehot, mask, l_d, 0.8, 1e-5); }, opt);
  });

  auto fine_case = [](ad::Var FineLosses::*member) {
    return [member](Instance& in, const GradCheckOptions& opt) {
      FullFixture f(in);
      return check(f.score_params(), [&] { return f.fine().*member; }, opt);
    };
  };
  cases.emplace_back("fine_d2", fine_case(&FineLosses::d2));
  cases.emplace_back("fine_adv2", fine_case(&FineLosses::adv2));
  cases.emplace_back("fine_blend_d", fine_case(&FineLosses::d_fine));
  cases.emplace_back("fine_blend_adv", fine_case(&FineLosses::adv_fine));

  auto coarse_case = [](ad::Var CoarseLosses::*member) {
    return [member](Instance& in, const GradCheckOptions& opt) {
      FullFixture f(in);
      return check(f.coarse_params(), [&] { return f.coarse().*member; }, opt);
    };
  };
  cases.emplace_back("coarse_d", coarse_case(&CoarseLosses::d_coarse));
  cases.emplace_back("coarse_adv", coarse_case(&CoarseLosses::adv_coarse));

  cases.emplace_back("total_disc", [](Instance& in, const GradCheckOptions& opt) {
    FullFixture f(in);
    std::vector<ad::Var> params = f.score_params();
    for (auto& p : f.coarse_params()) params.push_back(p);
    return check(params, [&] { return ad::add(f.fine().d_fine, f.coarse().d_coarse); }, opt);
  });

  cases.emplace_back("total_seg", [](Instance& in, const GradCheckOptions& opt) {
    FullFixture f(in);
    ad::Var probs(in.simplex());
    Tensor truth = in.labels(0.0);
    Tensor onehot = one_hot(truth, in.c);
    std::vector<ad::Var> params = {probs};
    for (auto& p : f.score_params()) params.push_back(p);
    for (auto& p : f.coarse_params()) params.push_back(p);
    return check(params,
                 [&] {
                   ad::Var pred = blend_pred(seg_cross_entropy(probs, truth),
                                             dice_loss(probs, onehot, 1e-5), 0.7);
                   return ad::add(pred,
                                  ad::add(f.fine().adv_fine, f.coarse().adv_coarse));
                 },
                 opt);
  });

  return cases;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& opt) {
  if (opt.instances < 1) throw std::invalid_argument("gradcheck: instances must be >= 1");
  if (opt.max_h < 2 || opt.max_w < 2 || opt.max_c < 2) {
    throw std::invalid_argument("gradcheck: sizes must be at least 2x2x2");
  }
  if (!(opt.step > 0.0) || !(opt.tolerance > 0.0)) {
    throw std::invalid_argument("gradcheck: step and tolerance must be > 0");
  }
  std::vector<GradCheckResult> results;
  std::uint64_t case_idx = 0;
  for (auto& [name, fn] : build_cases()) {
    GradCheckResult r;
    r.name = name;
    r.instances = opt.instances;
    for (int i = 0; i < opt.instances; ++i) {
      Instance in(derive_seed(opt.seed, case_idx * 10007 + static_cast<std::uint64_t>(i)), opt);
      r.max_rel_err = std::max(r.max_rel_err, fn(in, opt));
    }
    r.pass = r.max_rel_err < opt.tolerance;
    results.push_back(std::move(r));
    ++case_idx;
  }
  return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace ccda
