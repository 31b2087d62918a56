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
#ifndef CCDA_GRADCHECK_HPP_
#define CCDA_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccda/autodiff.hpp"

namespace ccda {

struct GradCheckOptions {
  std::uint64_t seed = 20260814;
  int instances = 20;       // random instances per loss
  double tolerance = 1e-4;  // max allowed relative error
  double step = 1e-5;       // central-difference step
  int max_h = 4, max_w = 6, max_c = 5;
  // test fixture: negates every analytic gradient so the suite must report
  // failures; used to prove the harness can fail
  bool inject_sign_flip = false;
};

struct GradCheckResult {
  std::string name;
  int instances = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Max relative error between backpropagated gradients and central finite
// differences of build() with respect to every element of every param.
// build() must recompute the scalar loss from the params' current values.
double max_rel_grad_error(std::vector<ad::Var>& params, const std::function<ad::Var()>& build,
                          double step, bool inject_sign_flip = false);

// One case per loss operation (including the composed totals); every
// differentiable tensor input is probed.
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& opt);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace ccda

#endif  // CCDA_GRADCHECK_HPP_
