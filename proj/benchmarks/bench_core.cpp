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
#include <benchmark/benchmark.h>

#include "ccda/datagen.hpp"
#include "ccda/losses.hpp"
#include "ccda/nets.hpp"
#include "ccda/trainer.hpp"

namespace {

using namespace ccda;

Tensor random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor img({h, w, 3});
  for (int i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform();
  return img;
}

void BM_ConvForward(benchmark::State& state) {
  Rng rng(1);
  Tensor x = random_image(32, 32, 2);
  Tensor w({3, 3, 3, 16});
  for (int i = 0; i < w.size(); ++i) w.data()[i] = 0.05 * rng.normal();
  Tensor b({16});
  ad::NoGradGuard guard;
  for (auto _ : state) {
    ad::Var y = ad::conv2d(ad::Var(x), ad::Var(w), ad::Var(b), 1, 1);
    benchmark::DoNotOptimize(y.value().data());
  }
}
BENCHMARK(BM_ConvForward);

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(1);
  Tensor x = random_image(32, 32, 2);
  Tensor wt({3, 3, 3, 16});
  for (int i = 0; i < wt.size(); ++i) wt.data()[i] = 0.05 * rng.normal();
  Tensor b({16});
  for (auto _ : state) {
    ad::Var w(wt);
    w.set_trainable(true);
    ad::Var y = ad::mean(ad::conv2d(ad::Var(x), w, ad::Var(b), 1, 1));
    ad::backward(y);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_ConvBackward);

void BM_RenderSample(benchmark::State& state) {
  SceneSpec scene;
  DomainShiftSpec shift;
  shift.hue_rotation_deg = 30.0;
  shift.noise_stddev = 0.04;
  std::uint64_t i = 0;
  for (auto _ : state) {
    Sample s = render_sample(scene, shift, i++);
    benchmark::DoNotOptimize(s.image.data());
  }
}
BENCHMARK(BM_RenderSample);

void BM_SegLossBackward(benchmark::State& state) {
  Rng rng(3);
  const int h = 64, w = 64, c = 5;
  Tensor scores({h, w, c});
  for (int i = 0; i < scores.size(); ++i) scores.data()[i] = rng.normal();
  Tensor labels({h, w});
  for (int i = 0; i < labels.size(); ++i) labels.data()[i] = rng.uniform_int(c);
  for (auto _ : state) {
    ad::Var s(scores);
    s.set_trainable(true);
    ad::Var probs = ad::softmax_channels(s);
    ad::Var loss = seg_cross_entropy(probs, labels);
    ad::backward(loss);
    benchmark::DoNotOptimize(s.grad().data());
  }
}
BENCHMARK(BM_SegLossBackward);

void BM_TrainStep(benchmark::State& state) {
  SceneSpec scene;
  scene.seed = 7;
  SceneSpec tscene = scene;
  tscene.seed = derive_seed(7, 1);
  DomainShiftSpec identity;
  DomainShiftSpec shift;
  shift.hue_rotation_deg = 30.0;
  Dataset src = generate_domain(scene, identity, 8);
  Dataset tgt = generate_domain(tscene, shift, 8);
  TrainConfig cfg;
  cfg.iterations = 1 << 20;
  EncoderSpec enc;
  DiscSpec disc;
  disc.fine_channels = {32, 64, 64, 64, 1};
  disc.coarse_tail_channels = {64, 64, -1};
  TrainSession session(cfg, enc, disc, src, tgt);
  for (auto _ : state) {
    LossReport r = session.step();
    benchmark::DoNotOptimize(r.terms);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
