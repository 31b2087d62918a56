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
#ifndef CCDA_EVAL_HPP_
#define CCDA_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ccda/datagen.hpp"
#include "ccda/nets.hpp"
#include "ccda/trainer.hpp"

namespace ccda {

// rows index ground truth, columns index predictions; ignore pixels skipped
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // C*C row-major

  explicit ConfusionMatrix(int c = 0)
      : num_classes(c), counts(static_cast<std::size_t>(c) * static_cast<std::size_t>(c), 0) {}
  std::int64_t& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t total() const;
};

// adds one image pair's joint counts; label maps must agree in size, truth
// may contain the ignore value, predictions must be valid classes
void accumulate(ConfusionMatrix& cm, const Tensor& truth, const Tensor& pred);

// elementwise sum; shards accumulated separately merge to the whole
void merge(ConfusionMatrix& into, const ConfusionMatrix& part);

struct IouReport {
  std::vector<double> per_class;  // NaN for classes with an empty union
  std::vector<bool> defined;
  double miou = 0.0;  // mean over defined classes only
  int defined_count = 0;
};

IouReport iou_report(const ConfusionMatrix& cm);

// bottom third (rounded up) of class indices by pixel count, rarest included
// first; ties broken toward the higher class index
std::vector<int> rare_classes(const std::vector<std::int64_t>& train_pixel_counts);

// mean per-class IoU over `subset`, skipping undefined entries; NaN if none
double subset_miou(const IouReport& iou, const std::vector<int>& subset);

// argmax class map under a no-gradient forward; image must divide by stride
Tensor predict_labels(const Models& models, const Tensor& image);

ConfusionMatrix evaluate_dataset(const Models& models, const Dataset& data,
                                 const std::string& split);

struct EvalReport {
  std::string split;
  int num_images = 0;
  ConfusionMatrix confusion;
  IouReport iou;
  std::vector<int> rare;  // class indices counted as rare
  double rare_miou = 0.0;
};

// rare classes are ranked by `train_pixel_counts` (pass the labeled training
// split's counts, not the evaluation split's)
EvalReport evaluate(const Models& models, const Dataset& data, const std::string& split,
                    const std::vector<std::int64_t>& train_pixel_counts);

void write_report_json(const std::string& path, const EvalReport& report);
void write_report_csv(const std::string& path, const EvalReport& report);
// horizontal-axis class bars, bar height proportional to IoU
void write_iou_bar_png(const std::string& path, const EvalReport& report);

// --- ablation ladder ------------------------------------------------------------

struct AblationCell {
  Variant variant = Variant::kBasic;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when the cell failed
  double miou = 0.0;
  double rare_miou = 0.0;
};

struct AblationSummary {
  Variant variant = Variant::kBasic;
  double mean_miou = 0.0;
  double std_miou = 0.0;
  double mean_rare_miou = 0.0;
  double std_rare_miou = 0.0;
  int cells_ok = 0;
};

struct AblationTable {
  std::vector<AblationCell> cells;
  std::vector<AblationSummary> summaries;  // basic, class, full
};

// Trains and evaluates the three ladder variants for every seed. Each run
// lives in out_dir/runs/<variant>-seed-<seed>; evaluation uses the target
// domain's `eval_split`. A failing cell records its error and the remaining
// cells still run.
AblationTable run_ablation(const TrainConfig& base, const EncoderSpec& enc_spec,
                           const DiscSpec& disc_spec, const Dataset& source,
                           const Dataset& target, const std::vector<std::uint64_t>& seeds,
                           const std::string& eval_split, const std::string& out_dir);

// ablation.json and ablation.csv under out_dir; the JSON carries the
// original full-scale ladder numbers as non-reproducible context
void write_ablation_files(const std::string& out_dir, const AblationTable& table);

}  // namespace ccda

#endif  // CCDA_EVAL_HPP_
