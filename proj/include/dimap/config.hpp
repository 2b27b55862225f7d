#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dimap/env.hpp"
#include "dimap/learner.hpp"

namespace dimap {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A full experiment: task, workspace grid, deictic mapping, learner
/// hyperparameters, and curriculum. Parsing is strict: unknown keys are
/// errors, and every error message names the offending key.
struct ExperimentConfig {
  std::string task;       // "grid-disk" | "block-align"
  std::string algorithm;  // "deictic" | "baseline"
  GridSpec grid;
  GoalConfig goal;
  TrainConfig learner;  // carries deictic config, network arch, seed
  std::vector<CurriculumStage> curriculum;
  int homcheck_stage_index = 0;
  double homcheck_tol = 1e-9;
  size_t homcheck_state_bound = 1000000;
  std::string output_dir = "out";

  const CurriculumStage& final_stage() const { return curriculum.back(); }
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

}  // namespace dimap
