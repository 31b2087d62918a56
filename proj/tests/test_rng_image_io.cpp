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
#include <cstdint>
#include <set>
#include <vector>

#include <doctest.h>

#include "ccda/image_io.hpp"
#include "ccda/rng.hpp"
#include "ccda/tensor.hpp"
#include "test_util.hpp"

namespace {

using ccda::Rng;
using ccda::Tensor;

TEST_SUITE("rng_image_io") {

TEST_CASE("splitmix64 produces the published reference sequence") {
  // reference output of splitmix64 for seed 1234567
  // (Vigna's splitmix64.c, first three outputs)
  std::uint64_t s = 1234567ULL;
  CHECK(ccda::splitmix64(s) == 6457827717110365317ULL);
  CHECK(ccda::splitmix64(s) == 3203168211198807973ULL);
  CHECK(ccda::splitmix64(s) == 9817491932198370423ULL);
}

TEST_CASE("derive_seed decorrelates streams and is order-independent") {
  const std::uint64_t base = 99;
  const std::uint64_t a = ccda::derive_seed(base, 0);
  const std::uint64_t b = ccda::derive_seed(base, 1);
  CHECK(a != b);
  // pure function: same inputs, same output, regardless of call order
  CHECK(ccda::derive_seed(base, 1) == b);
  CHECK(ccda::derive_seed(base, 0) == a);
  CHECK(ccda::derive_seed(base + 1, 0) != a);
}

TEST_CASE("Rng streams are reproducible and well distributed") {
  Rng r1(2026), r2(2026);
  for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());

  Rng r(5);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sumsq += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(sumsq / n == doctest::Approx(1.0 / 3.0).epsilon(0.03));
}

TEST_CASE("uniform_int covers the full range without bias") {
  Rng r(77);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 14000; ++i) {
    const int v = r.uniform_int(7);
    REQUIRE(v >= 0);
    REQUIRE(v < 7);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) CHECK(c > 1600);  // expectation 2000
}

TEST_CASE("normal draws have unit variance") {
  Rng r(31);
  double sum = 0.0, sumsq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sumsq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(1.0));
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("quantize8 snaps onto the 8-bit grid") {
  CHECK(ccda::quantize8(0.0) == 0.0);
  CHECK(ccda::quantize8(1.0) == 1.0);
  CHECK(ccda::quantize8(0.5) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
  // idempotent on the grid
  for (int k = 0; k <= 255; ++k) {
    const double v = k / 255.0;
    CHECK(ccda::quantize8(v) == v);
  }
  // out-of-range pixels are not silently wrapped: the writer rejects them
  testutil::TempDir dir("png-range");
  Tensor bad({1, 1, 3});
  bad[0] = 1.7;
  CHECK_THROWS_AS(ccda::write_png_rgb8(dir.sub("bad.png").string(), bad), std::invalid_argument);
  bad.fill(0.5);
  bad[2] = -0.3;
  CHECK_THROWS_AS(ccda::write_png_rgb8(dir.sub("bad.png").string(), bad), std::invalid_argument);
}

TEST_CASE("rgb8 png round trip is pixel exact on the quantized grid") {
  testutil::TempDir dir("png-rgb");
  Rng rng(404);
  Tensor img({9, 13, 3});
  for (std::int64_t i = 0; i < img.size(); ++i) {
    img[i] = ccda::quantize8(rng.uniform());
  }
  const std::string path = dir.sub("img.png");
  ccda::write_png_rgb8(path, img);
  Tensor back = ccda::read_png_rgb8(path);
  REQUIRE(back.shape() == img.shape());
  for (std::int64_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);
}

TEST_CASE("gray8 png round trip preserves integer label maps") {
  testutil::TempDir dir("png-gray");
  Rng rng(405);
  Tensor labels({7, 5});
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<double>(rng.uniform_int(256));
  }
  labels[0] = 255.0;  // the ignore sentinel must survive the trip
  const std::string path = dir.sub("labels.png");
  ccda::write_png_gray8(path, labels);
  Tensor back = ccda::read_png_gray8(path);
  REQUIRE(back.shape() == labels.shape());
  for (std::int64_t i = 0; i < labels.size(); ++i) CHECK(back[i] == labels[i]);
}

TEST_CASE("reading a missing png reports the path") {
  testutil::TempDir dir("png-miss");
  const std::string path = dir.sub("absent.png");
  CHECK_THROWS_WITH_AS((void)ccda::read_png_rgb8(path),
                       doctest::Contains("absent.png"), std::runtime_error);
  CHECK_THROWS_AS((void)ccda::read_png_gray8(path), std::runtime_error);
}

}  // TEST_SUITE

}  // namespace
