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
#include <vector>

#include <doctest.h>

#include "ccda/datagen.hpp"
#include "ccda/labels.hpp"
#include "ccda/rng.hpp"
#include "ccda/tensor.hpp"

namespace {

using ccda::PatchGrid;
using ccda::Rng;
using ccda::Tensor;

Tensor random_probs(Rng& rng, int h, int w, int c) {
  Tensor p({h, w, c});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int k = 0; k < c; ++k) {
        p.at(i, j, k) = -std::log(1.0 - rng.uniform());
        s += p.at(i, j, k);
      }
      for (int k = 0; k < c; ++k) p.at(i, j, k) /= s;
    }
  }
  return p;
}

TEST_SUITE("labels") {

TEST_CASE("patch grid requires an exact tiling") {
  PatchGrid g = ccda::make_patch_grid(64, 64, 8, 8);
  CHECK(g.rows == 8);
  CHECK(g.cols == 8);
  CHECK(g.patch_height == 8);
  CHECK(g.patch_width == 8);
  CHECK_NOTHROW((void)ccda::make_patch_grid(32, 48, 16, 16));
  CHECK_THROWS_AS((void)ccda::make_patch_grid(64, 64, 7, 8), std::invalid_argument);
  CHECK_THROWS_AS((void)ccda::make_patch_grid(64, 60, 8, 8), std::invalid_argument);
  CHECK_THROWS_AS((void)ccda::make_patch_grid(64, 64, 0, 8), std::invalid_argument);
}

TEST_CASE("truth presence marks exactly the classes inside each patch") {
  Tensor labels({4, 4});
  // patch (0,0): classes 0 and 2; patch (0,1): class 1 only;
  // patch (1,0): all ignore; patch (1,1): class 3 plus ignore filler
  labels.at(0, 0) = 0;
  labels.at(0, 1) = 2;
  labels.at(1, 0) = 0;
  labels.at(1, 1) = 0;
  labels.at(0, 2) = 1;
  labels.at(0, 3) = 1;
  labels.at(1, 2) = 1;
  labels.at(1, 3) = 1;
  for (int j = 0; j < 2; ++j)
    for (int i = 2; i < 4; ++i) labels.at(i, j) = ccda::kIgnoreLabel;
  labels.at(2, 2) = 3;
  labels.at(2, 3) = ccda::kIgnoreLabel;
  labels.at(3, 2) = ccda::kIgnoreLabel;
  labels.at(3, 3) = 3;

  PatchGrid g = ccda::make_patch_grid(4, 4, 2, 2);
  Tensor w = ccda::coarse_labels_from_truth(labels, g, 4);
  REQUIRE(w.shape() == std::vector<int>{2, 2, 4});

  const double expected[2][2][4] = {{{1, 0, 1, 0}, {0, 1, 0, 0}},
                                    {{0, 0, 0, 0}, {0, 0, 0, 1}}};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      for (int k = 0; k < 4; ++k) CHECK(w.at(r, c, k) == expected[r][c][k]);
}

TEST_CASE("presence maps are binary for any input magnitudes") {
  Rng rng(8);
  Tensor probs = random_probs(rng, 8, 8, 5);
  PatchGrid g = ccda::make_patch_grid(8, 8, 4, 4);
  Tensor w = ccda::coarse_labels_from_prediction(probs, g, 0.3);
  for (std::int64_t i = 0; i < w.size(); ++i) {
    CHECK((w[i] == 0.0 || w[i] == 1.0));
  }

  // scaling that preserves which probabilities clear the threshold leaves
  // the map unchanged: binarization forgets magnitudes
  Tensor w2 = ccda::coarse_labels_from_prediction(probs, g, 0.3 + 1e-12);
  for (std::int64_t i = 0; i < w.size(); ++i) CHECK(w[i] == w2[i]);
}

TEST_CASE("prediction presence uses a strict threshold") {
  Tensor probs({2, 2, 2});
  // one pixel sits exactly at the threshold, one just above
  probs.at(0, 0, 0) = 0.9;
  probs.at(0, 0, 1) = 0.1;
  probs.at(0, 1, 0) = 0.9 + 1e-9;
  probs.at(0, 1, 1) = 0.1 - 1e-9;
  probs.at(1, 0, 0) = 0.5;
  probs.at(1, 0, 1) = 0.5;
  probs.at(1, 1, 0) = 0.5;
  probs.at(1, 1, 1) = 0.5;

  PatchGrid left = ccda::make_patch_grid(2, 2, 2, 1);
  Tensor w = ccda::coarse_labels_from_prediction(probs, left, 0.9);
  // left patch: max prob of class 0 is exactly 0.9 -> not present
  CHECK(w.at(0, 0, 0) == 0.0);
  // right patch: 0.9 + 1e-9 > 0.9 -> present
  CHECK(w.at(0, 1, 0) == 1.0);
  CHECK(w.at(0, 1, 1) == 0.0);
}

TEST_CASE("raising the presence threshold can only clear bits") {
  Rng rng(401);
  Tensor probs = random_probs(rng, 16, 16, 6);
  PatchGrid g = ccda::make_patch_grid(16, 16, 4, 4);
  const double thresholds[] = {0.05, 0.2, 0.4, 0.6, 0.8, 0.95};
  Tensor prev = ccda::coarse_labels_from_prediction(probs, g, thresholds[0]);
  for (std::size_t t = 1; t < std::size(thresholds); ++t) {
    Tensor cur = ccda::coarse_labels_from_prediction(probs, g, thresholds[t]);
    for (std::int64_t i = 0; i < cur.size(); ++i) CHECK(cur[i] <= prev[i]);
    prev = cur;
  }
}

TEST_CASE("pseudo labels take the argmax with ties toward the lower index") {
  Tensor probs({1, 3, 3});
  probs.at(0, 0, 0) = 0.2;
  probs.at(0, 0, 1) = 0.5;
  probs.at(0, 0, 2) = 0.3;
  probs.at(0, 1, 0) = 0.4;  // tie between classes 0 and 2
  probs.at(0, 1, 1) = 0.2;
  probs.at(0, 1, 2) = 0.4;
  probs.at(0, 2, 0) = 1.0 / 3;  // three-way tie
  probs.at(0, 2, 1) = 1.0 / 3;
  probs.at(0, 2, 2) = 1.0 / 3;

  Tensor y = ccda::pseudo_labels(probs);
  REQUIRE(y.shape() == std::vector<int>{1, 3});
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(0, 2) == 0.0);
}

TEST_CASE("pseudo labeling is idempotent through one-hot re-encoding") {
  Rng rng(77);
  Tensor probs = random_probs(rng, 12, 12, 5);
  Tensor y1 = ccda::pseudo_labels(probs);
  Tensor sharp = ccda::one_hot(y1, 5);
  Tensor y2 = ccda::pseudo_labels(sharp);
  for (std::int64_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("uncertainty mask uses a strict below-threshold comparison") {
  Tensor probs({1, 3, 2});
  probs.at(0, 0, 0) = 0.5;  // max exactly at threshold -> certain
  probs.at(0, 0, 1) = 0.5;
  probs.at(0, 1, 0) = 0.5 - 1e-9;  // just below -> uncertain
  probs.at(0, 1, 1) = 0.5 + 1e-9;
  probs.at(0, 2, 0) = 0.4999;
  probs.at(0, 2, 1) = 0.5001;

  Tensor n = ccda::uncertainty_mask(probs, 0.5);
  CHECK(n.at(0, 0) == 0.0);
  CHECK(n.at(0, 1) == 0.0);  // its max is 0.5 + 1e-9 > 0.5
  CHECK(n.at(0, 2) == 0.0);

  Tensor n2 = ccda::uncertainty_mask(probs, 0.5001);
  CHECK(n2.at(0, 0) == 1.0);   // 0.5 < 0.5001
  CHECK(n2.at(0, 2) == 0.0);   // max is exactly 0.5001, not strictly below

  Tensor n3 = ccda::uncertainty_mask(probs, 0.9);
  for (std::int64_t i = 0; i < n3.size(); ++i) CHECK(n3[i] == 1.0);
}

TEST_CASE("one_hot encodes classes and zeroes ignore pixels") {
  Tensor labels({2, 2});
  labels.at(0, 0) = 0;
  labels.at(0, 1) = 3;
  labels.at(1, 0) = ccda::kIgnoreLabel;
  labels.at(1, 1) = 1;
  Tensor oh = ccda::one_hot(labels, 4);
  REQUIRE(oh.shape() == std::vector<int>{2, 2, 4});
  for (int k = 0; k < 4; ++k) {
    CHECK(oh.at(0, 0, k) == (k == 0 ? 1.0 : 0.0));
    CHECK(oh.at(0, 1, k) == (k == 3 ? 1.0 : 0.0));
    CHECK(oh.at(1, 0, k) == 0.0);
    CHECK(oh.at(1, 1, k) == (k == 1 ? 1.0 : 0.0));
  }
  labels.at(0, 0) = 4;  // out of range for C=4
  CHECK_THROWS_AS((void)ccda::one_hot(labels, 4), std::invalid_argument);
}

TEST_CASE("probability validation accepts simplex maps and rejects junk") {
  Rng rng(5);
  Tensor good = random_probs(rng, 4, 4, 3);
  CHECK_NOTHROW(ccda::validate_probs(good));

  Tensor flat({4, 4});
  CHECK_THROWS_AS(ccda::validate_probs(flat), std::invalid_argument);

  Tensor nan = good;
  nan.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ccda::validate_probs(nan), std::invalid_argument);

  Tensor off = good;
  off.at(1, 1, 0) += 0.5;  // row sum far from one
  CHECK_THROWS_AS(ccda::validate_probs(off), std::invalid_argument);
}

}  // TEST_SUITE

}  // namespace
