// Copyright 2026 The CCDA Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end tests for the command line front end.  Every test drives
// ccda::run_cli in process with a synthetic argv and asserts on the exit
// code and the files the command leaves behind.

#include "doctest.h"

#include "ccda/cli.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("ccda");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return ccda::run_cli(static_cast<int>(argv.size()), argv.data());
}

// A config small enough that generate/train/eval/ablate all finish in
// seconds on one core.  Crop 32 divides the coarse stride product
// (encoder stride 8 times 2 per coarse tail layer), so the full variant
// is legal too.
constexpr const char* kTinyConfig = R"json({
  "scene": {
    "image_height": 32, "image_width": 32, "num_classes": 4,
    "train_images": 4, "val_images": 2,
    "shapes_min": 2, "shapes_max": 4, "class_frequency_skew": 0.8
  },
  "train": {
    "iterations": 2, "crop_height": 32, "crop_width": 32,
    "checkpoint_every": 2, "seed": 5
  },
  "model": {
    "feature_channels": 16,
    "fine_channels": [16, 16, 1],
    "coarse_tail_channels": [16, -1],
    "shared_prefix_layers": 1
  }
})json";

// Shared workspace: one generated dataset reused by the train/eval/ablate
// tests.  Built lazily outside any doctest assertion context; tests check
// generate_exit before relying on it.
struct CliWorkspace {
  testutil::TempDir dir{"cli-ws"};
  std::string config_path;
  std::string data_dir;
  int generate_exit = -1;

  CliWorkspace() {
    config_path = dir.sub("tiny.json").string();
    testutil::write_file(config_path, kTinyConfig);
    data_dir = dir.sub("data").string();
    generate_exit = run({"generate", "--config", config_path, "--out", data_dir});
  }
};

CliWorkspace& workspace() {
  static CliWorkspace ws;
  return ws;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits zero, missing or unknown arguments exit two") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({"train", "--help"}) == 0);
  CHECK(run({}) == 2);                                // a subcommand is required
  CHECK(run({"frobnicate"}) == 2);                    // unknown subcommand
  CHECK(run({"generate"}) == 2);                      // --out is required
  CHECK(run({"generate", "--out", "x", "--bogus"}) == 2);
}

TEST_CASE("generate writes both domains, the resolved config, and releases its lock") {
  CliWorkspace& ws = workspace();
  REQUIRE(ws.generate_exit == 0);
  CHECK(fs::exists(fs::path(ws.data_dir) / "source" / "manifest.json"));
  CHECK(fs::exists(fs::path(ws.data_dir) / "target" / "manifest.json"));
  CHECK(fs::exists(fs::path(ws.data_dir) / "config.resolved.json"));
  // The in-flight lock must be gone once the command returns.
  CHECK_FALSE(fs::exists(fs::path(ws.data_dir) / ".ccda-lock"));
}

TEST_CASE("an existing lock file makes a command fail with a runtime exit") {
  CliWorkspace& ws = workspace();
  REQUIRE(ws.generate_exit == 0);
  testutil::TempDir out("cli-lock");
  const fs::path run_dir = out.sub("run");
  fs::create_directories(run_dir);
  testutil::write_file((run_dir / ".ccda-lock").string(), "");
  CHECK(run({"train", "--config", ws.config_path, "--data", ws.data_dir,
             "--out", run_dir.string()}) == 3);
  fs::remove(run_dir / ".ccda-lock");
}

TEST_CASE("train writes a log, checkpoints, and the resolved config") {
  CliWorkspace& ws = workspace();
  REQUIRE(ws.generate_exit == 0);
  testutil::TempDir out("cli-train");
  const std::string run_dir = out.sub("run").string();
  REQUIRE(run({"train", "--config", ws.config_path, "--data", ws.data_dir,
               "--variant", "full", "--out", run_dir}) == 0);
  CHECK(fs::exists(fs::path(run_dir) / "log.csv"));
  CHECK(fs::exists(fs::path(run_dir) / "config.resolved.json"));
  CHECK(fs::exists(fs::path(run_dir) / "checkpoints" / "step-2.ckpt"));
  CHECK_FALSE(fs::exists(fs::path(run_dir) / ".ccda-lock"));

  SUBCASE("eval scores the checkpoint and emits reports") {
    const std::string ckpt = (fs::path(run_dir) / "checkpoints" / "step-2.ckpt").string();
    const std::string manifest = (fs::path(ws.data_dir) / "source" / "manifest.json").string();
    testutil::TempDir eval_out("cli-eval");
    const std::string eval_dir = eval_out.sub("scores").string();
    REQUIRE(run({"eval", "--config", ws.config_path, "--checkpoint", ckpt,
                 "--manifest", manifest, "--split", "val", "--out", eval_dir}) == 0);
    CHECK(fs::exists(fs::path(eval_dir) / "report.json"));
    CHECK(fs::exists(fs::path(eval_dir) / "report.csv"));
    CHECK_FALSE(fs::exists(fs::path(eval_dir) / "iou.png"));

    const std::string plot_dir = eval_out.sub("scores-plots").string();
    REQUIRE(run({"eval", "--config", ws.config_path, "--checkpoint", ckpt,
                 "--manifest", manifest, "--split", "val", "--plots",
                 "--out", plot_dir}) == 0);
    CHECK(fs::exists(fs::path(plot_dir) / "iou.png"));
    CHECK(fs::file_size(fs::path(plot_dir) / "iou.png") > 0);
  }

  SUBCASE("eval rejects a dataset with more classes than the checkpoint") {
    // A five class dataset: its labels fall outside the four class model.
    testutil::TempDir wide("cli-wide");
    const std::string wide_cfg = wide.sub("wide.json").string();
    testutil::write_file(wide_cfg, R"json({
      "scene": {"image_height": 32, "image_width": 32, "num_classes": 5,
                "train_images": 2, "val_images": 2,
                "shapes_min": 2, "shapes_max": 4},
      "train": {"crop_height": 32, "crop_width": 32}
    })json");
    const std::string wide_data = wide.sub("data").string();
    REQUIRE(run({"generate", "--config", wide_cfg, "--out", wide_data}) == 0);

    const std::string ckpt = (fs::path(run_dir) / "checkpoints" / "step-2.ckpt").string();
    const std::string manifest = (fs::path(wide_data) / "source" / "manifest.json").string();
    CHECK(run({"eval", "--config", ws.config_path, "--checkpoint", ckpt,
               "--manifest", manifest, "--split", "val",
               "--out", wide.sub("scores").string()}) == 2);
  }
}

TEST_CASE("train rejects bad flags and missing inputs with a usage exit") {
  CliWorkspace& ws = workspace();
  REQUIRE(ws.generate_exit == 0);
  testutil::TempDir out("cli-badtrain");
  const std::string run_dir = out.sub("run").string();
  // --variant is validated by the parser itself.
  CHECK(run({"train", "--config", ws.config_path, "--data", ws.data_dir,
             "--variant", "medium", "--out", run_dir}) == 2);
  // A data directory without manifests is reported as a usage error.
  CHECK(run({"train", "--config", ws.config_path, "--data", out.sub("empty").string(),
             "--out", run_dir}) == 2);
}

TEST_CASE("eval with a missing checkpoint exits with a runtime error") {
  CliWorkspace& ws = workspace();
  REQUIRE(ws.generate_exit == 0);
  testutil::TempDir out("cli-nockpt");
  const std::string manifest = (fs::path(ws.data_dir) / "source" / "manifest.json").string();
  CHECK(run({"eval", "--config", ws.config_path,
             "--checkpoint", out.sub("missing.ckpt").string(),
             "--manifest", manifest, "--out", out.sub("scores").string()}) == 3);
}

TEST_CASE("gradcheck passes on honest gradients and fails on a sign flip") {
  CHECK(run({"gradcheck", "--instances", "1", "--sizes", "3x4x3", "--seed", "7"}) == 0);
  CHECK(run({"gradcheck", "--instances", "1", "--sizes", "3x4x3", "--seed", "7",
             "--inject-sign-flip"}) == 3);
  CHECK(run({"gradcheck", "--sizes", "3x4"}) == 2);
  CHECK(run({"gradcheck", "--sizes", "axbxc"}) == 2);
}

TEST_CASE("ablate runs the variant ladder and writes the summary files") {
  CliWorkspace& ws = workspace();
  REQUIRE(ws.generate_exit == 0);
  testutil::TempDir out("cli-ablate");
  const std::string abl_dir = out.sub("ablation").string();
  REQUIRE(run({"ablate", "--config", ws.config_path, "--data", ws.data_dir,
               "--seeds", "1", "--iterations", "2", "--out", abl_dir}) == 0);
  CHECK(fs::exists(fs::path(abl_dir) / "ablation.json"));
  CHECK(fs::exists(fs::path(abl_dir) / "ablation.csv"));
  CHECK(fs::exists(fs::path(abl_dir) / "runs" / "basic-seed-1" / "log.csv"));
  CHECK(fs::exists(fs::path(abl_dir) / "runs" / "full-seed-1" / "report.json"));

  SUBCASE("a malformed seed list is a usage error") {
    CHECK(run({"ablate", "--config", ws.config_path, "--data", ws.data_dir,
               "--seeds", "1,x", "--out", out.sub("bad").string()}) == 2);
  }
}

}  // TEST_SUITE("cli")
