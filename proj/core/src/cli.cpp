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
#include "ccda/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccda/config.hpp"
#include "ccda/datagen.hpp"
#include "ccda/eval.hpp"
#include "ccda/gradcheck.hpp"
#include "ccda/trainer.hpp"

namespace ccda {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

// one command owns a run directory at a time
class DirLock {
 public:
  explicit DirLock(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
    path_ = (fs::path(dir) / ".ccda-lock").string();
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw std::runtime_error("directory " + dir +
                               " is locked by another invocation (remove " + path_ +
                               " if that run is gone)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string device = "cpu";
  bool plots = false;
};

RunConfig load_or_default(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? default_config() : load_config(args.config_path);
  if (args.seed_given) {
    cfg.train.seed = {args.seed, "user"};
  }
  if (args.device != "cpu") {
    throw std::invalid_argument("unsupported device '" + args.device + "' (only cpu exists)");
  }
  return cfg;
}

std::vector<std::pair<std::string, int>> split_plan(const RunConfig& cfg) {
  return {{"train", cfg.scene.train_images.value}, {"val", cfg.scene.val_images.value}};
}

void require_manifest(const std::string& path) {
  if (!fs::exists(path)) {
    throw std::invalid_argument("dataset manifest not found: " + path);
  }
}

// source/target manifests under a generate output directory
std::pair<std::string, std::string> data_dir_manifests(const std::string& data_dir,
                                                       std::string source_override,
                                                       std::string target_override) {
  std::string src = source_override.empty()
                        ? (fs::path(data_dir) / "source" / "manifest.json").string()
                        : std::move(source_override);
  std::string tgt = target_override.empty()
                        ? (fs::path(data_dir) / "target" / "manifest.json").string()
                        : std::move(target_override);
  if (src.empty() || tgt.empty()) {
    throw std::invalid_argument("need --data DIR or both --source and --target manifests");
  }
  require_manifest(src);
  require_manifest(tgt);
  return {src, tgt};
}

int cmd_generate(const CommonArgs& args) {
  RunConfig cfg = load_or_default(args);
  DirLock lock(args.out_dir);
  const std::uint64_t seed = cfg.train.seed.value;
  const SceneSpec src_scene = to_scene_spec(cfg, seed);
  const SceneSpec tgt_scene = to_scene_spec(cfg, derive_seed(seed, 1));
  const DomainShiftSpec identity{};
  const DomainShiftSpec tgt_shift = to_shift_spec(cfg);

  const Dataset src = generate_domain(src_scene, identity, split_plan(cfg));
  const Dataset tgt = generate_domain(tgt_scene, tgt_shift, split_plan(cfg));
  const std::string src_manifest =
      write_dataset(src, (fs::path(args.out_dir) / "source").string());
  const std::string tgt_manifest =
      write_dataset(tgt, (fs::path(args.out_dir) / "target").string());
  write_resolved((fs::path(args.out_dir) / "config.resolved.json").string(), cfg);
  std::printf("source manifest: %s\n", src_manifest.c_str());
  std::printf("target manifest: %s\n", tgt_manifest.c_str());
  return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir, const std::string& src_m,
              const std::string& tgt_m, const std::string& variant, int iterations) {
  RunConfig cfg = load_or_default(args);
  if (!variant.empty()) cfg.train.variant = {variant, "user"};
  if (iterations > 0) cfg.train.iterations = {iterations, "user"};

  const auto [src_manifest, tgt_manifest] = data_dir_manifests(data_dir, src_m, tgt_m);
  const Dataset source = read_dataset(src_manifest);
  const Dataset target = read_dataset(tgt_manifest);

  DirLock lock(args.out_dir);
  write_resolved((fs::path(args.out_dir) / "config.resolved.json").string(), cfg);
  const TrainConfig tc = to_train_config(cfg);
  train(tc, to_encoder_spec(cfg), to_disc_spec(cfg), source, target, args.out_dir);
  std::printf("run complete: %s (%d iterations, variant %s)\n", args.out_dir.c_str(),
              tc.iterations, to_string(tc.variant).c_str());
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint,
             const std::string& manifest, const std::string& split) {
  require_manifest(manifest);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Dataset data = read_dataset(manifest);
  const std::string count_split = data.splits.count("train") ? "train" : split;
  const std::vector<std::int64_t> counts = class_pixel_counts(data, count_split);

  DirLock lock(args.out_dir);
  const EvalReport report = evaluate(ckpt.models, data, split, counts);
  write_report_json((fs::path(args.out_dir) / "report.json").string(), report);
  write_report_csv((fs::path(args.out_dir) / "report.csv").string(), report);
  if (args.plots) {
    write_iou_bar_png((fs::path(args.out_dir) / "iou.png").string(), report);
  }
  std::printf("split %s over %d images: mIoU %.4f, rare-class IoU %.4f\n", split.c_str(),
              report.num_images, report.iou.miou, report.rare_miou);
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, bool seed_given, int instances, const std::string& sizes,
                  bool inject_sign_flip) {
  GradCheckOptions opt;
  if (seed_given) opt.seed = seed;
  if (instances > 0) opt.instances = instances;
  opt.inject_sign_flip = inject_sign_flip;
  if (!sizes.empty()) {
    int h = 0, w = 0, c = 0;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(sizes);
    in >> h >> sep1 >> w >> sep2 >> c;
    if (!in || sep1 != 'x' || sep2 != 'x') {
      throw std::invalid_argument("--sizes expects HxWxC, e.g. 4x6x5");
    }
    opt.max_h = h;
    opt.max_w = w;
    opt.max_c = c;
  }
  const std::vector<GradCheckResult> results = run_gradcheck_suite(opt);
  std::printf("%-20s %10s %14s  %s\n", "loss", "instances", "max_rel_err", "status");
  for (const GradCheckResult& r : results) {
    std::printf("%-20s %10d %14.3e  %s\n", r.name.c_str(), r.instances, r.max_rel_err,
                r.pass ? "pass" : "FAIL");
  }
  if (!all_passed(results)) {
    std::fprintf(stderr, "gradient check failed\n");
    return kExitRuntime;
  }
  std::printf("all gradients match finite differences\n");
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args, const std::string& data_dir, const std::string& src_m,
               const std::string& tgt_m, const std::string& seeds_arg, int iterations) {
  RunConfig cfg = load_or_default(args);
  if (iterations > 0) cfg.train.iterations = {iterations, "user"};

  std::vector<std::uint64_t> seeds;
  if (!seeds_arg.empty()) {
    std::istringstream in(seeds_arg);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      try {
        seeds.push_back(std::stoull(tok));
      } catch (const std::exception&) {
        throw std::invalid_argument("--seeds expects a comma-separated integer list");
      }
    }
    if (seeds.empty()) throw std::invalid_argument("--seeds is empty");
  } else {
    seeds = cfg.eval.ablation_seeds.value;
  }

  const auto [src_manifest, tgt_manifest] = data_dir_manifests(data_dir, src_m, tgt_m);
  const Dataset source = read_dataset(src_manifest);
  const Dataset target = read_dataset(tgt_manifest);

  DirLock lock(args.out_dir);
  write_resolved((fs::path(args.out_dir) / "config.resolved.json").string(), cfg);
  const AblationTable table =
      run_ablation(to_train_config(cfg), to_encoder_spec(cfg), to_disc_spec(cfg), source,
                   target, seeds, cfg.eval.split.value, args.out_dir);
  write_ablation_files(args.out_dir, table);

  bool any_failed = false;
  std::printf("%-8s %8s %10s %12s\n", "variant", "cells", "mean mIoU", "mean rare");
  for (const AblationSummary& s : table.summaries) {
    std::printf("%-8s %8d %10.4f %12.4f\n", to_string(s.variant).c_str(), s.cells_ok,
                s.mean_miou, s.mean_rare_miou);
  }
  for (const AblationCell& c : table.cells) {
    if (!c.ok) {
      any_failed = true;
      std::fprintf(stderr, "cell %s seed %llu failed: %s\n", to_string(c.variant).c_str(),
                   static_cast<unsigned long long>(c.seed), c.error.c_str());
    }
  }
  return any_failed ? kExitRuntime : kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"desk-scale laboratory for class-conditional domain-adaptive segmentation"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data_dir, src_manifest, tgt_manifest, variant, split = "val";
  std::string checkpoint, sizes, seeds_arg;
  int iterations = 0, instances = 0;
  bool inject_sign_flip = false;

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", common.config_path, "JSON config file");
    cmd->add_option("--seed", common.seed, "seed override")->each([&](const std::string&) {
      common.seed_given = true;
    });
    cmd->add_option("--device", common.device, "compute device (cpu)");
    if (needs_out) cmd->add_option("--out", common.out_dir, "output directory")->required();
  };

  CLI::App* generate = app.add_subcommand("generate", "render the paired source/target datasets");
  add_common(generate, true);

  CLI::App* train_cmd = app.add_subcommand("train", "run the adversarial training loop");
  add_common(train_cmd, true);
  train_cmd->add_option("--data", data_dir, "directory produced by generate");
  train_cmd->add_option("--source", src_manifest, "source manifest (overrides --data)");
  train_cmd->add_option("--target", tgt_manifest, "target manifest (overrides --data)");
  train_cmd->add_option("--variant", variant, "basic, class, or full")
      ->check(CLI::IsMember({"basic", "class", "full"}));
  train_cmd->add_option("--iterations", iterations, "training steps");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--manifest", tgt_manifest, "dataset manifest")->required();
  eval_cmd->add_option("--split", split, "dataset split to score");
  eval_cmd->add_flag("--plots", common.plots, "emit a per-class IoU bar plot");

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "compare every loss gradient to finite differences");
  gradcheck_cmd->add_option("--seed", common.seed, "seed override")
      ->each([&](const std::string&) { common.seed_given = true; });
  gradcheck_cmd->add_option("--instances", instances, "random instances per loss");
  gradcheck_cmd->add_option("--sizes", sizes, "max input size as HxWxC");
  gradcheck_cmd->add_flag("--inject-sign-flip", inject_sign_flip,
                          "flip analytic gradients to prove the harness detects failures");

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "train and score the three-variant ladder over seeds");
  add_common(ablate_cmd, true);
  ablate_cmd->add_option("--data", data_dir, "directory produced by generate");
  ablate_cmd->add_option("--source", src_manifest, "source manifest (overrides --data)");
  ablate_cmd->add_option("--target", tgt_manifest, "target manifest (overrides --data)");
  ablate_cmd->add_option("--seeds", seeds_arg, "comma-separated seed list");
  ablate_cmd->add_option("--iterations", iterations, "training steps per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, returns 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(common);
    if (train_cmd->parsed()) {
      return cmd_train(common, data_dir, src_manifest, tgt_manifest, variant, iterations);
    }
    if (eval_cmd->parsed()) return cmd_eval(common, checkpoint, tgt_manifest, split);
    if (gradcheck_cmd->parsed()) {
      return cmd_gradcheck(common.seed, common.seed_given, instances, sizes, inject_sign_flip);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(common, data_dir, src_manifest, tgt_manifest, seeds_arg, iterations);
    }
    std::fprintf(stderr, "error: no subcommand\n");
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace ccda
