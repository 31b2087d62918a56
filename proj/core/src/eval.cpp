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
#include "ccda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ccda/image_io.hpp"
#include "ccda/labels.hpp"

namespace ccda {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

void accumulate(ConfusionMatrix& cm, const Tensor& truth, const Tensor& pred) {
  if (cm.num_classes < 2) throw std::invalid_argument("accumulate: confusion matrix unset");
  if (truth.rank() != 2 || pred.rank() != 2 || !truth.same_shape(pred)) {
    throw std::invalid_argument("accumulate: truth and prediction maps must match in size");
  }
  const int n = truth.size();
  for (int i = 0; i < n; ++i) {
    const double tv = truth.data()[i];
    const int t = static_cast<int>(tv);
    if (t == kIgnoreLabel) continue;
    const int p = static_cast<int>(pred.data()[i]);
    if (t < 0 || t >= cm.num_classes || static_cast<double>(t) != tv) {
      throw std::invalid_argument("accumulate: truth label " + std::to_string(tv) +
                                  " out of range");
    }
    if (p < 0 || p >= cm.num_classes || static_cast<double>(p) != pred.data()[i]) {
      throw std::invalid_argument("accumulate: predicted label " +
                                  std::to_string(pred.data()[i]) + " out of range");
    }
    ++cm.at(t, p);
  }
}

void merge(ConfusionMatrix& into, const ConfusionMatrix& part) {
  if (into.num_classes != part.num_classes) {
    throw std::invalid_argument("merge: confusion matrices disagree on class count");
  }
  for (std::size_t i = 0; i < into.counts.size(); ++i) into.counts[i] += part.counts[i];
}

IouReport iou_report(const ConfusionMatrix& cm) {
  const int c = cm.num_classes;
  if (c < 1) throw std::invalid_argument("iou_report: confusion matrix unset");
  IouReport out;
  out.per_class.assign(static_cast<std::size_t>(c), std::numeric_limits<double>::quiet_NaN());
  out.defined.assign(static_cast<std::size_t>(c), false);
  double sum = 0.0;
  for (int k = 0; k < c; ++k) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::int64_t inter = cm.at(k, k);
    const std::int64_t uni = row + col - inter;
    if (uni == 0) continue;  // class absent from truth and prediction
    out.per_class[static_cast<std::size_t>(k)] =
        static_cast<double>(inter) / static_cast<double>(uni);
    out.defined[static_cast<std::size_t>(k)] = true;
    sum += out.per_class[static_cast<std::size_t>(k)];
    ++out.defined_count;
  }
  out.miou = out.defined_count > 0 ? sum / out.defined_count
                                   : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<int> rare_classes(const std::vector<std::int64_t>& train_pixel_counts) {
  const int c = static_cast<int>(train_pixel_counts.size());
  if (c < 1) throw std::invalid_argument("rare_classes: empty count vector");
  std::vector<int> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (train_pixel_counts[static_cast<std::size_t>(a)] !=
        train_pixel_counts[static_cast<std::size_t>(b)]) {
      return train_pixel_counts[static_cast<std::size_t>(a)] <
             train_pixel_counts[static_cast<std::size_t>(b)];
    }
    return a > b;  // tie: the higher class index is rarer by construction
  });
  const int k = (c + 2) / 3;
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

double subset_miou(const IouReport& iou, const std::vector<int>& subset) {
  double sum = 0.0;
  int n = 0;
  for (int k : subset) {
    if (k < 0 || k >= static_cast<int>(iou.per_class.size())) {
      throw std::invalid_argument("subset_miou: class index out of range");
    }
    if (!iou.defined[static_cast<std::size_t>(k)]) continue;
    sum += iou.per_class[static_cast<std::size_t>(k)];
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

Tensor predict_labels(const Models& models, const Tensor& image) {
  ad::NoGradGuard guard;
  ad::Var feat = encode(models.encoder, image);
  ad::Var probs = segment(models.seg_head, feat, models.encoder_spec.stride);
  return pseudo_labels(probs.value());
}

ConfusionMatrix evaluate_dataset(const Models& models, const Dataset& data,
                                 const std::string& split) {
  auto it = data.splits.find(split);
  if (it == data.splits.end() || it->second.empty()) {
    throw std::invalid_argument("evaluate: dataset has no samples in split '" + split + "'");
  }
  ConfusionMatrix cm(models.num_classes);
  for (int idx : it->second) {
    const Sample& s = data.samples.at(static_cast<std::size_t>(idx));
    if (!s.has_labels) {
      throw std::invalid_argument("evaluate: sample " + std::to_string(idx) +
                                  " in split '" + split + "' has no labels");
    }
    accumulate(cm, s.labels, predict_labels(models, s.image));
  }
  return cm;
}

EvalReport evaluate(const Models& models, const Dataset& data, const std::string& split,
                    const std::vector<std::int64_t>& train_pixel_counts) {
  if (static_cast<int>(train_pixel_counts.size()) != models.num_classes) {
    throw std::invalid_argument("evaluate: pixel-count vector size != class count");
  }
  EvalReport report;
  report.split = split;
  report.num_images = static_cast<int>(data.splits.at(split).size());
  report.confusion = evaluate_dataset(models, data, split);
  report.iou = iou_report(report.confusion);
  report.rare = rare_classes(train_pixel_counts);
  report.rare_miou = subset_miou(report.iou, report.rare);
  return report;
}

namespace {

json iou_json(const EvalReport& r) {
  json per = json::array();
  for (std::size_t k = 0; k < r.iou.per_class.size(); ++k) {
    if (r.iou.defined[k]) {
      per.push_back(r.iou.per_class[k]);
    } else {
      per.push_back(nullptr);
    }
  }
  json conf = json::array();
  for (int t = 0; t < r.confusion.num_classes; ++t) {
    json row = json::array();
    for (int p = 0; p < r.confusion.num_classes; ++p) row.push_back(r.confusion.at(t, p));
    conf.push_back(row);
  }
  return json{{"split", r.split},
              {"num_images", r.num_images},
              {"num_classes", r.confusion.num_classes},
              {"per_class_iou", per},
              {"miou", r.iou.miou},
              {"rare_classes", r.rare},
              {"rare_miou", std::isnan(r.rare_miou) ? json(nullptr) : json(r.rare_miou)},
              {"confusion", conf}};
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << body;
  if (!out.flush()) throw std::runtime_error("failed writing " + path);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

void write_report_json(const std::string& path, const EvalReport& report) {
  write_text_file(path, iou_json(report).dump(2) + "\n");
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::string body = "class,iou,defined,rare\n";
  char buf[64];
  for (std::size_t k = 0; k < report.iou.per_class.size(); ++k) {
    const bool rare =
        std::find(report.rare.begin(), report.rare.end(), static_cast<int>(k)) !=
        report.rare.end();
    if (report.iou.defined[k]) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,1,%d\n", k, report.iou.per_class[k],
                    rare ? 1 : 0);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,,0,%d\n", k, rare ? 1 : 0);
    }
    body += buf;
  }
  std::snprintf(buf, sizeof(buf), "miou,%.6f,,\n", report.iou.miou);
  body += buf;
  if (!std::isnan(report.rare_miou)) {
    std::snprintf(buf, sizeof(buf), "rare_miou,%.6f,,\n", report.rare_miou);
    body += buf;
  } else {
    body += "rare_miou,,,\n";
  }
  write_text_file(path, body);
}

void write_iou_bar_png(const std::string& path, const EvalReport& report) {
  const int c = report.confusion.num_classes;
  const int bar_w = 24, gap = 8, h = 120, pad = 10;
  const int w = pad * 2 + c * bar_w + (c - 1) * gap;
  Tensor img({h, w, 3});
  img.fill(1.0);
  for (int j = 0; j < w; ++j) img.at(h - pad, j, 0) = img.at(h - pad, j, 1) =
                                  img.at(h - pad, j, 2) = 0.3;
  for (int k = 0; k < c; ++k) {
    const double v = report.iou.defined[static_cast<std::size_t>(k)]
                         ? report.iou.per_class[static_cast<std::size_t>(k)]
                         : 0.0;
    const int bh = static_cast<int>(std::lround(v * (h - 2 * pad)));
    const int x0 = pad + k * (bar_w + gap);
    const bool rare =
        std::find(report.rare.begin(), report.rare.end(), k) != report.rare.end();
    const double r = rare ? 0.85 : 0.25, g = rare ? 0.35 : 0.45, b = rare ? 0.2 : 0.85;
    for (int i = 0; i < bh; ++i) {
      for (int j = 0; j < bar_w; ++j) {
        img.at(h - pad - 1 - i, x0 + j, 0) = r;
        img.at(h - pad - 1 - i, x0 + j, 1) = g;
        img.at(h - pad - 1 - i, x0 + j, 2) = b;
      }
    }
  }
  write_png_rgb8(path, img);
}

AblationTable run_ablation(const TrainConfig& base, const EncoderSpec& enc_spec,
                           const DiscSpec& disc_spec, const Dataset& source,
                           const Dataset& target, const std::vector<std::uint64_t>& seeds,
                           const std::string& eval_split, const std::string& out_dir) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: need at least one seed");
  const std::vector<Variant> ladder = {Variant::kBasic, Variant::kClassConditional,
                                       Variant::kFull};
  const std::vector<std::int64_t> counts = class_pixel_counts(source, "train");

  AblationTable table;
  for (std::uint64_t seed : seeds) {
    for (Variant v : ladder) {
      AblationCell cell;
      cell.variant = v;
      cell.seed = seed;
      try {
        TrainConfig cfg = base;
        cfg.variant = v;
        cfg.seed = seed;
        const std::string run_dir =
            (fs::path(out_dir) / "runs" / (to_string(v) + "-seed-" + std::to_string(seed)))
                .string();
        train(cfg, enc_spec, disc_spec, source, target, run_dir);
        const std::string ckpt_path =
            (fs::path(run_dir) / "checkpoints" /
             ("step-" + std::to_string(cfg.iterations) + ".ckpt"))
                .string();
        Checkpoint ckpt = load_checkpoint(ckpt_path);
        EvalReport report = evaluate(ckpt.models, target, eval_split, counts);
        write_report_json((fs::path(run_dir) / "report.json").string(), report);
        write_report_csv((fs::path(run_dir) / "report.csv").string(), report);
        cell.miou = report.iou.miou;
        cell.rare_miou = report.rare_miou;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      table.cells.push_back(std::move(cell));
    }
  }

  for (Variant v : ladder) {
    AblationSummary s;
    s.variant = v;
    std::vector<double> mious, rares;
    for (const AblationCell& cell : table.cells) {
      if (cell.variant != v || !cell.ok) continue;
      mious.push_back(cell.miou);
      if (!std::isnan(cell.rare_miou)) rares.push_back(cell.rare_miou);
    }
    s.cells_ok = static_cast<int>(mious.size());
    s.mean_miou = mean_of(mious);
    s.std_miou = stddev_of(mious);
    s.mean_rare_miou = mean_of(rares);
    s.std_rare_miou = stddev_of(rares);
    table.summaries.push_back(s);
  }
  return table;
}

void write_ablation_files(const std::string& out_dir, const AblationTable& table) {
  json cells = json::array();
  for (const AblationCell& c : table.cells) {
    json entry{{"variant", to_string(c.variant)}, {"seed", c.seed}, {"ok", c.ok}};
    if (c.ok) {
      entry["miou"] = c.miou;
      entry["rare_miou"] = std::isnan(c.rare_miou) ? json(nullptr) : json(c.rare_miou);
    } else {
      entry["error"] = c.error;
    }
    cells.push_back(entry);
  }
  json summaries = json::array();
  for (const AblationSummary& s : table.summaries) {
    summaries.push_back(json{{"variant", to_string(s.variant)},
                             {"cells_ok", s.cells_ok},
                             {"mean_miou", std::isnan(s.mean_miou) ? json(nullptr)
                                                                   : json(s.mean_miou)},
                             {"std_miou", s.std_miou},
                             {"mean_rare_miou", std::isnan(s.mean_rare_miou)
                                                    ? json(nullptr)
                                                    : json(s.mean_rare_miou)},
                             {"std_rare_miou", s.std_rare_miou}});
  }
  json doc{{"cells", cells},
           {"summaries", summaries},
           {"full_scale_reference",
            {{"basic", 34.9},
             {"class", 37.0},
             {"full", 37.7},
             {"note", "mIoU of the original full-scale experiments, shown only as directional "
                      "context; not reproducible on this synthetic desk-scale benchmark"}}}};
  write_text_file((fs::path(out_dir) / "ablation.json").string(), doc.dump(2) + "\n");

  std::string csv = "variant,seed,ok,miou,rare_miou\n";
  char buf[128];
  for (const AblationCell& c : table.cells) {
    if (c.ok) {
      std::snprintf(buf, sizeof(buf), "%s,%llu,1,%.6f,%.6f\n", to_string(c.variant).c_str(),
                    static_cast<unsigned long long>(c.seed), c.miou, c.rare_miou);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%llu,0,,\n", to_string(c.variant).c_str(),
                    static_cast<unsigned long long>(c.seed));
    }
    csv += buf;
  }
  for (const AblationSummary& s : table.summaries) {
    std::snprintf(buf, sizeof(buf), "mean_%s,,%d,%.6f,%.6f\n", to_string(s.variant).c_str(),
                  s.cells_ok, s.mean_miou, s.mean_rare_miou);
    csv += buf;
  }
  write_text_file((fs::path(out_dir) / "ablation.csv").string(), csv);
}

}  // namespace ccda
