// Copyright 2026 The MILProxy Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "milproxy/checkpoint.hpp"
#include "milproxy/common.hpp"
#include "milproxy/dataset.hpp"
#include "milproxy/evaluation.hpp"
#include "milproxy/heatmap.hpp"
#include "milproxy/proxy_labeling.hpp"
#include "milproxy/run_config.hpp"
#include "milproxy/simulator.hpp"
#include "milproxy/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw milproxy::IoError("cannot create output directory " + dir.string() + ": " +
                            ec.message());
  }
}

// Paths inside a config file resolve against the config file's directory.
fs::path resolve_against(const fs::path& config_path, const std::string& rel) {
  fs::path p(rel);
  return p.is_absolute() ? p : config_path.parent_path() / p;
}

struct Cohort {
  std::vector<milproxy::SlideRecord> records;
  fs::path base_dir;
};

// Loads the manifest named by the run config, or synthesizes a cohort under
// out_dir when the config carries an inline simulator spec instead.
Cohort load_cohort(const milproxy::RunConfig& cfg, const fs::path& config_path,
                   const fs::path& out_dir) {
  Cohort cohort;
  if (!cfg.manifest.empty()) {
    const fs::path manifest_path = resolve_against(config_path, cfg.manifest);
    if (!fs::exists(manifest_path)) {
      throw milproxy::IoError("manifest not found: " + manifest_path.string());
    }
    cohort.records = milproxy::read_manifest(manifest_path);
    cohort.base_dir = manifest_path.parent_path();
  } else {
    cohort.base_dir = out_dir / "cohort";
    cohort.records = milproxy::generate(*cfg.simulator, cohort.base_dir);
  }
  if (cohort.records.empty()) {
    throw milproxy::ValidationError("manifest lists no slides");
  }
  return cohort;
}

std::vector<milproxy::SlideFeatures> load_slides(const Cohort& cohort,
                                                 const std::vector<std::size_t>& indices) {
  std::vector<milproxy::SlideFeatures> slides;
  slides.reserve(indices.size());
  for (std::size_t i : indices) {
    slides.push_back(milproxy::read_slide_csv(
        milproxy::resolve_feature_path(cohort.base_dir, cohort.records[i])));
  }
  return slides;
}

void split_indices(const Cohort& cohort, const milproxy::TrainSettings& settings,
                   std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    if (milproxy::is_validation_slide(cohort.records[i].slide_id, settings.seed,
                                      settings.validation_fraction)) {
      val_idx.push_back(i);
    } else {
      train_idx.push_back(i);
    }
  }
}

// Shortest decimal that round-trips; keeps grid values like 0.2 readable.
std::string csv_number(double v) { return nlohmann::json(v).dump(); }

int cmd_simulate(const CommonArgs& args) {
  milproxy::SyntheticSpec spec = milproxy::load_synthetic_spec(args.config);
  if (args.seed) {
    spec.seed = *args.seed;
  }
  ensure_out_dir(args.out);
  const auto records = milproxy::generate(spec, args.out);
  std::cout << "wrote " << records.size() << " slides to " << args.out << '\n';
  return 0;
}

int cmd_train(const CommonArgs& args) {
  milproxy::RunConfig cfg = milproxy::load_run_config(args.config);
  if (args.seed) {
    cfg.train.seed = *args.seed;
  }
  ensure_out_dir(args.out);
  const Cohort cohort = load_cohort(cfg, args.config, args.out);

  const milproxy::TrainResult result =
      milproxy::train(cohort.records, cohort.base_dir, cfg.framework, cfg.train);

  milproxy::Checkpoint ckpt{result.params, result.adam, cfg.framework};
  milproxy::save_checkpoint(fs::path(args.out) / "checkpoint.bin", ckpt);
  milproxy::write_train_log(fs::path(args.out) / "train_log.json", result.log);
  std::cout << "trained " << cfg.train.epochs << " epochs on " << result.log.n_train_slides
            << " slides; checkpoint.bin and train_log.json written to " << args.out << '\n';
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& split) {
  milproxy::RunConfig cfg = milproxy::load_run_config(args.config);
  if (args.seed) {
    cfg.train.seed = *args.seed;
  }
  const milproxy::Checkpoint ckpt = milproxy::load_checkpoint(checkpoint_path);
  ensure_out_dir(args.out);
  const Cohort cohort = load_cohort(cfg, args.config, args.out);

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  split_indices(cohort, cfg.train, train_idx, val_idx);

  std::vector<std::size_t> eval_idx;
  if (split == "validation") {
    eval_idx = val_idx;
  } else if (split == "train") {
    eval_idx = train_idx;
  } else {
    eval_idx.resize(cohort.records.size());
    std::iota(eval_idx.begin(), eval_idx.end(), std::size_t{0});
  }
  if (eval_idx.empty()) {
    throw milproxy::ValidationError("eval: the '" + split + "' split contains no slides");
  }

  const auto eval_slides = load_slides(cohort, eval_idx);
  const auto val_slides = load_slides(cohort, val_idx);
  const milproxy::EvalReport report =
      milproxy::evaluate_model(ckpt.params, eval_slides, val_slides);
  milproxy::write_eval_report(fs::path(args.out) / "eval_report.json", report);
  std::cout << "split=" << split << " auc=" << report.auc << " precision=" << report.precision
            << " recall=" << report.recall << " threshold=" << report.threshold << '\n';
  return 0;
}

int cmd_benchmark(const CommonArgs& args, double grid_step) {
  milproxy::RunConfig cfg = milproxy::load_run_config(args.config);
  if (args.seed) {
    cfg.train.seed = *args.seed;
  }
  const std::vector<milproxy::FrameworkConfig> grid = milproxy::feasible_grid(grid_step);
  ensure_out_dir(args.out);
  const Cohort cohort = load_cohort(cfg, args.config, args.out);

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  split_indices(cohort, cfg.train, train_idx, val_idx);
  if (val_idx.empty()) {
    throw milproxy::ValidationError("benchmark: validation split is empty, nothing to score");
  }
  const auto val_slides = load_slides(cohort, val_idx);

  const fs::path csv_path = fs::path(args.out) / "benchmark.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) {
    throw milproxy::IoError("cannot open benchmark csv: " + csv_path.string());
  }
  csv << "alpha,beta,auc,precision,recall,threshold\n";

  for (std::size_t k = 0; k < grid.size(); ++k) {
    const milproxy::FrameworkConfig& fw = grid[k];
    // Every configuration trains on the same split and seed so rows differ
    // only by (alpha, beta).
    const milproxy::TrainResult result =
        milproxy::train(cohort.records, cohort.base_dir, fw, cfg.train);
    const milproxy::EvalReport report =
        milproxy::evaluate_model(result.params, val_slides, val_slides);

    char cfg_dir[64];
    std::snprintf(cfg_dir, sizeof(cfg_dir), "alpha_%g_beta_%g", fw.alpha, fw.beta);
    const fs::path sub = fs::path(args.out) / cfg_dir;
    ensure_out_dir(sub);
    milproxy::save_checkpoint(sub / "checkpoint.bin", {result.params, result.adam, fw});
    milproxy::write_train_log(sub / "train_log.json", result.log);
    milproxy::write_eval_report(sub / "eval_report.json", report);

    csv << csv_number(fw.alpha) << ',' << csv_number(fw.beta) << ',' << csv_number(report.auc)
        << ',' << csv_number(report.precision) << ',' << csv_number(report.recall) << ','
        << csv_number(report.threshold) << '\n';
    std::cout << "config " << (k + 1) << "/" << grid.size() << " (alpha=" << fw.alpha
              << ", beta=" << fw.beta << "): auc=" << report.auc << '\n';
  }
  if (!csv) {
    throw milproxy::IoError("write failed for benchmark csv: " + csv_path.string());
  }
  std::cout << "wrote " << csv_path.string() << '\n';
  return 0;
}

int cmd_heatmap(const std::string& checkpoint_path, const std::string& slide_path,
                const std::string& out) {
  const milproxy::Checkpoint ckpt = milproxy::load_checkpoint(checkpoint_path);
  if (!fs::exists(slide_path)) {
    throw milproxy::IoError("slide feature file not found: " + slide_path);
  }
  const milproxy::SlideFeatures slide = milproxy::read_slide_csv(slide_path);
  const milproxy::SlidePredictions pred = milproxy::predict_slide(ckpt.params, slide);
  const milproxy::Heatmap map = milproxy::render_heatmap(pred);

  ensure_out_dir(out);
  const fs::path base = fs::path(out) / slide.slide_id;
  milproxy::write_pgm(base.string() + "_heatmap.pgm", map);
  milproxy::write_scores_csv(base.string() + "_scores.csv", pred);
  std::cout << "wrote " << base.string() << "_heatmap.pgm (" << map.width << "x" << map.height
            << ") and _scores.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised bag-label training of patch-level tumor classifiers"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string checkpoint;
  std::string slide;
  std::string split = "validation";
  double grid_step = 0.2;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic cohort with ground truth");
  sim->add_option("--config", args.config, "simulator spec JSON")->required();
  sim->add_option("--out", args.out, "output directory")->required();
  sim->add_option("--seed", args.seed, "override the spec seed");

  auto* train = app.add_subcommand("train", "Train one framework configuration");
  train->add_option("--config", args.config, "run config JSON")->required();
  train->add_option("--out", args.out, "output directory")->required();
  train->add_option("--seed", args.seed, "override the training seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
  eval->add_option("--config", args.config, "run config JSON")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--out", args.out, "output directory")->required();
  eval->add_option("--split", split, "validation | train | all")
      ->check(CLI::IsMember({"validation", "train", "all"}));
  eval->add_option("--seed", args.seed, "override the split seed");

  auto* bench = app.add_subcommand("benchmark", "Train and score every feasible (alpha, beta)");
  bench->add_option("--config", args.config, "run config JSON")->required();
  bench->add_option("--out", args.out, "output directory")->required();
  bench->add_option("--grid-step", grid_step, "lattice step for the (alpha, beta) grid");
  bench->add_option("--seed", args.seed, "override the training seed");

  auto* heat = app.add_subcommand("heatmap", "Render per-patch scores as a graymap");
  heat->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  heat->add_option("--slide", slide, "slide feature CSV")->required();
  heat->add_option("--out", args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      return cmd_simulate(args);
    }
    if (train->parsed()) {
      return cmd_train(args);
    }
    if (eval->parsed()) {
      return cmd_eval(args, checkpoint, split);
    }
    if (bench->parsed()) {
      return cmd_benchmark(args, grid_step);
    }
    if (heat->parsed()) {
      return cmd_heatmap(checkpoint, slide, args.out);
    }
  } catch (const milproxy::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return milproxy::ValidationError::exit_code;
  } catch (const milproxy::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return milproxy::IoError::exit_code;
  } catch (const milproxy::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return milproxy::NumericError::exit_code;
  }
  return 0;
}
