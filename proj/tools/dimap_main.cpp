// Command line front-end: train, eval, homcheck, gradcheck, sweep.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dimap/commands.hpp"

namespace {

std::optional<std::vector<int>> parse_stage_list(const std::string& spec) {
  if (spec.empty()) return std::nullopt;
  std::vector<int> stages;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    stages.push_back(std::stoi(spec.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return stages;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deictic image mapping workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string params_dir;
  std::string stages_spec;
  std::string out_dir;
  std::string report_path;
  std::string seeds_spec;
  uint64_t seed = 0;
  bool seed_set = false;
  int budget = -1;
  int episodes = 200;
  double min_success = 0.0;
  int num_specs = 50;
  double tol = 1e-4;
  bool require_well_defined = false;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<uint64_t>(
        "--seed",
        [&](const uint64_t& v) {
          seed = v;
          seed_set = true;
        },
        "override the config's RNG seed");
  };

  CLI::App* train = app.add_subcommand("train", "train per an experiment config");
  train->add_option("--config", config_path, "experiment config file")->required();
  add_seed(train);
  train->add_option("--out", out_dir, "override the config's output directory");
  train->add_option("--stages", stages_spec, "comma-separated curriculum stage indices");
  train->add_option("--budget", budget, "override the per-stage episode budget");

  CLI::App* eval = app.add_subcommand("eval", "greedy rollouts of saved parameters");
  eval->add_option("--params", params_dir, "directory holding *.params files")->required();
  eval->add_option("--config", config_path, "experiment config file")->required();
  eval->add_option("--episodes", episodes, "number of evaluation episodes");
  eval->add_option("--min-success", min_success, "exit 3 below this success rate");
  add_seed(eval);

  CLI::App* homcheck = app.add_subcommand("homcheck", "verify the abstraction on a small stage");
  homcheck->add_option("--config", config_path, "experiment config file")->required();
  homcheck->add_option("--out", report_path, "also write the JSON report here");
  homcheck->add_flag("--require-well-defined", require_well_defined,
                     "exit 3 if the abstraction is refuted");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seed", seed, "seed for the randomized specs");
  gradcheck->add_option("--specs", num_specs, "number of random network specs");
  gradcheck->add_option("--tol", tol, "max relative error accepted");

  CLI::App* sweep = app.add_subcommand("sweep", "train over several seeds and summarize");
  sweep->add_option("--config", config_path, "experiment config file")->required();
  sweep->add_option("--seeds", seeds_spec, "comma-separated seed list")->required();
  sweep->add_option("--out", out_dir, "output directory for the sweep");
  sweep->add_option("--stages", stages_spec, "comma-separated curriculum stage indices");
  sweep->add_option("--budget", budget, "override the per-stage episode budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dimap::kExitUsage;
  }

  dimap::TrainOverrides overrides;
  if (seed_set) overrides.seed = seed;
  if (!out_dir.empty()) overrides.output_dir = out_dir;
  try {
    overrides.stages = parse_stage_list(stages_spec);
  } catch (const std::exception&) {
    std::cerr << "error: --stages expects comma-separated integers\n";
    return dimap::kExitUsage;
  }
  if (budget >= 0) overrides.budget = budget;

  if (train->parsed())
    return dimap::cmd_train(config_path, overrides, std::cout, std::cerr);
  if (eval->parsed())
    return dimap::cmd_eval(params_dir, config_path, episodes, min_success,
                           seed_set ? std::optional<uint64_t>(seed) : std::nullopt, std::cout,
                           std::cerr);
  if (homcheck->parsed())
    return dimap::cmd_homcheck(config_path, require_well_defined,
                               report_path.empty() ? std::nullopt
                                                   : std::optional<std::string>(report_path),
                               std::cout, std::cerr);
  if (gradcheck->parsed()) return dimap::cmd_gradcheck(seed, num_specs, tol, std::cout, std::cerr);
  if (sweep->parsed()) {
    std::vector<uint64_t> seeds;
    size_t pos = 0;
    try {
      while (pos < seeds_spec.size()) {
        size_t comma = seeds_spec.find(',', pos);
        if (comma == std::string::npos) comma = seeds_spec.size();
        seeds.push_back(std::stoull(seeds_spec.substr(pos, comma - pos)));
        pos = comma + 1;
      }
    } catch (const std::exception&) {
      std::cerr << "error: --seeds expects comma-separated integers\n";
      return dimap::kExitUsage;
    }
    return dimap::cmd_sweep(config_path, seeds, overrides, std::cout, std::cerr);
  }
  return dimap::kExitUsage;
}
