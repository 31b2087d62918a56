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
#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "ccda/gradcheck.hpp"
#include "ccda/tensor.hpp"

namespace {

using ccda::GradCheckOptions;
using ccda::GradCheckResult;
using ccda::Tensor;
namespace ad = ccda::ad;

TEST_SUITE("gradcheck") {

TEST_CASE("max_rel_grad_error is tiny for a correct analytic gradient") {
  std::vector<ad::Var> params;
  params.emplace_back(Tensor::from_data({3}, {0.3, -0.7, 1.1}), true);
  auto build = [&params]() { return ad::mean(ad::mul(ad::sigmoid(params[0]), params[0])); };
  const double err = ccda::max_rel_grad_error(params, build, 1e-5);
  CHECK(err < 1e-7);
}

TEST_CASE("max_rel_grad_error flags a wrong gradient") {
  std::vector<ad::Var> params;
  params.emplace_back(Tensor::from_data({2}, {0.4, -0.2}), true);
  // the derivative handed to apply_unary is off by a factor of two
  auto build = [&params]() {
    return ad::sum(ad::apply_unary(
        params[0], [](double x) { return x * x; },
        [](double x, double) { return 4.0 * x; }));
  };
  const double err = ccda::max_rel_grad_error(params, build, 1e-5);
  // a doubled derivative lands at relative error 1/2 under the max-normalized
  // denominator; anything near that is a loud failure against the 1e-4 gate
  CHECK(err > 0.4);
}

TEST_CASE("probing leaves the parameter values untouched") {
  std::vector<ad::Var> params;
  params.emplace_back(Tensor::from_data({2}, {0.25, -0.5}), true);
  auto build = [&params]() { return ad::sum(ad::mul(params[0], params[0])); };
  (void)ccda::max_rel_grad_error(params, build, 1e-5);
  CHECK(params[0].value()[0] == 0.25);
  CHECK(params[0].value()[1] == -0.5);
}

TEST_CASE("the suite covers every loss path with enough instances") {
  GradCheckOptions opt;
  opt.instances = 3;  // keep the unit test quick; the acceptance run uses 20
  std::vector<GradCheckResult> results = ccda::run_gradcheck_suite(opt);

  std::set<std::string> names;
  for (const GradCheckResult& r : results) names.insert(r.name);
  const char* required[] = {"seg_cross_entropy", "dice_loss",   "blend_pred",
                            "domain_bce_d",      "domain_bce_adv", "fine_cbce_source",
                            "fine_cbce_target",  "fine_d2",     "fine_adv2",
                            "fine_blend_d",      "fine_blend_adv", "coarse_d",
                            "coarse_adv",        "total_disc",  "total_seg"};
  for (const char* name : required) {
    CAPTURE(name);
    CHECK(names.count(name) == 1);
  }
  CHECK(results.size() == std::size(required));

  for (const GradCheckResult& r : results) {
    CAPTURE(r.name);
    CHECK(r.instances == opt.instances);
    CHECK(r.max_rel_err < opt.tolerance);
    CHECK(r.pass);
  }
  CHECK(ccda::all_passed(results));
}

TEST_CASE("the suite reports failures when gradients are sabotaged") {
  GradCheckOptions opt;
  opt.instances = 1;
  opt.inject_sign_flip = true;  // force every analytic gradient wrong
  std::vector<GradCheckResult> results = ccda::run_gradcheck_suite(opt);
  CHECK_FALSE(ccda::all_passed(results));
  int failures = 0;
  for (const GradCheckResult& r : results) {
    if (!r.pass) ++failures;
  }
  // every case with a nonzero gradient must trip
  CHECK(failures == static_cast<int>(results.size()));
}

TEST_CASE("results are reproducible for a fixed seed") {
  GradCheckOptions opt;
  opt.instances = 2;
  std::vector<GradCheckResult> a = ccda::run_gradcheck_suite(opt);
  std::vector<GradCheckResult> b = ccda::run_gradcheck_suite(opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].max_rel_err == b[i].max_rel_err);
  }

  opt.seed += 1;
  std::vector<GradCheckResult> c = ccda::run_gradcheck_suite(opt);
  bool any_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].max_rel_err != c[i].max_rel_err) any_differs = true;
  }
  CHECK(any_differs);
}

}  // TEST_SUITE

}  // namespace
