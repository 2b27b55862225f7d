#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dimap/config.hpp"

namespace dimap {

// Process exit codes, also used by the acceptance suite for CI gating.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;      // bad usage or invalid config
inline constexpr int kExitRuntime = 2;    // runtime failure
inline constexpr int kExitThreshold = 3;  // an acceptance threshold was missed

struct TrainOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::vector<int>> stages;  // subset of curriculum indices, in order
  std::optional<int> budget;               // per-stage episode budget override
};

/// Train per the config; writes curve.csv and final parameters into the
/// output directory.
int cmd_train(const std::string& config_path, const TrainOverrides& overrides, std::ostream& out,
              std::ostream& err);

/// Greedy rollouts of saved parameters on the config's final stage.
int cmd_eval(const std::string& params_dir, const std::string& config_path, int episodes,
             double min_success, std::optional<uint64_t> seed, std::ostream& out,
             std::ostream& err);

/// Homomorphism verification on the config's homcheck stage; prints a JSON
/// report. With require_well_defined, a refuted abstraction exits with
/// kExitThreshold.
int cmd_homcheck(const std::string& config_path, bool require_well_defined,
                 const std::optional<std::string>& report_path, std::ostream& out,
                 std::ostream& err);

/// Finite-difference gradient verification over randomized network specs.
int cmd_gradcheck(uint64_t seed, int num_specs, double tol, std::ostream& out, std::ostream& err);

/// Repeated training over a list of seeds; per-seed outputs plus a summary
/// CSV with episodes-to-solve per stage.
int cmd_sweep(const std::string& config_path, const std::vector<uint64_t>& seeds,
              const TrainOverrides& overrides, std::ostream& out, std::ostream& err);

}  // namespace dimap
