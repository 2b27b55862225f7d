#include "dimap/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "dimap/gradcheck.hpp"
#include "dimap/homomorphism.hpp"
#include "dimap/learner.hpp"

namespace dimap {

namespace {

namespace fs = std::filesystem;

std::vector<CurriculumStage> selected_stages(const ExperimentConfig& cfg,
                                             const TrainOverrides& overrides) {
  std::vector<CurriculumStage> stages;
  if (overrides.stages) {
    for (int idx : *overrides.stages) {
      if (idx < 0 || idx >= static_cast<int>(cfg.curriculum.size()))
        throw ConfigError("--stages index " + std::to_string(idx) + " is out of range");
      stages.push_back(cfg.curriculum[idx]);
    }
    if (stages.empty()) throw ConfigError("--stages selected no stages");
  } else {
    stages = cfg.curriculum;
  }
  if (overrides.budget)
    for (CurriculumStage& s : stages) s.episode_budget = *overrides.budget;
  return stages;
}

struct TrainOutcome {
  RunResult run;
  std::string output_dir;
};

TrainOutcome run_training(ExperimentConfig cfg, const TrainOverrides& overrides) {
  if (overrides.seed) cfg.learner.seed = *overrides.seed;
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  const std::vector<CurriculumStage> stages = selected_stages(cfg, overrides);

  fs::create_directories(cfg.output_dir);
  TrainOutcome outcome;
  outcome.output_dir = cfg.output_dir;
  if (cfg.algorithm == "deictic") {
    DeicticTrainer trainer(cfg.grid, cfg.goal, cfg.learner);
    outcome.run = trainer.run_curriculum(stages);
    trainer.agent().save(cfg.output_dir);
  } else {
    MoveEffectEnv env(cfg.grid, stages[0], cfg.goal, cfg.learner.episode_horizon);
    BaselineAgent agent(cfg.learner, cfg.grid, static_cast<int>(env.action_space().size()));
    const int budget = stages[0].episode_budget > 0 ? stages[0].episode_budget : 1000;
    outcome.run = run_baseline(cfg.grid, cfg.goal, stages[0], cfg.learner, budget, &agent);
    agent.save(cfg.output_dir);
  }
  write_curve_csv(cfg.output_dir + "/curve.csv", outcome.run.curve);
  return outcome;
}

}  // namespace

int cmd_train(const std::string& config_path, const TrainOverrides& overrides, std::ostream& out,
              std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const TrainOutcome outcome = run_training(cfg, overrides);
    out << "wrote " << outcome.output_dir << "/curve.csv\n";
    for (size_t i = 0; i < outcome.run.stages.size(); ++i) {
      const StageResult& s = outcome.run.stages[i];
      out << "stage " << i << ": episodes=" << s.episodes_run << " env_steps=" << s.env_steps
          << (s.solved ? " solved" : " budget-exhausted") << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_eval(const std::string& params_dir, const std::string& config_path, int episodes,
             double min_success, std::optional<uint64_t> seed, std::ostream& out,
             std::ostream& err) {
  if (episodes <= 0) {
    err << "error: --episodes must be positive\n";
    return kExitUsage;
  }
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    if (seed) cfg.learner.seed = *seed;
    EvalResult res;
    if (cfg.algorithm == "deictic") {
      DeicticAgent agent(cfg.learner);
      agent.load(params_dir);
      res = evaluate_policy(agent, cfg.grid, cfg.goal, cfg.final_stage(), episodes,
                            cfg.learner.seed);
    } else {
      MoveEffectEnv env(cfg.grid, cfg.final_stage(), cfg.goal, cfg.learner.episode_horizon);
      BaselineAgent agent(cfg.learner, cfg.grid,
                          static_cast<int>(env.action_space().size()));
      agent.load(params_dir);
      res = evaluate_baseline(agent, cfg.grid, cfg.goal, cfg.final_stage(), episodes,
                              cfg.learner.seed);
    }
    char line[128];
    std::snprintf(line, sizeof(line), "success_rate=%.4f mean_steps=%.3f episodes=%d\n",
                  res.success_rate, res.mean_steps, res.episodes);
    out << line;
    return res.success_rate >= min_success ? kExitOk : kExitThreshold;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_homcheck(const std::string& config_path, bool require_well_defined,
                 const std::optional<std::string>& report_path, std::ostream& out,
                 std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    HomcheckParams params;
    params.grid = cfg.grid;
    params.stage = cfg.curriculum[cfg.homcheck_stage_index];
    params.goal = cfg.goal;
    params.deictic = cfg.learner.deictic;
    params.gamma = cfg.learner.gamma;
    params.tol = cfg.homcheck_tol;
    params.state_bound = cfg.homcheck_state_bound;
    const AbstractionReport report = run_homcheck(params);
    const std::string doc = report.to_json();
    out << doc << "\n";
    if (report_path) {
      std::ofstream os(*report_path, std::ios::binary);
      if (!os) throw std::runtime_error("cannot open '" + *report_path + "' for writing");
      os << doc << "\n";
    }
    if (require_well_defined && !report.well_defined) return kExitThreshold;
    return kExitOk;
  } catch (const StateBoundExceededError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_gradcheck(uint64_t seed, int num_specs, double tol, std::ostream& out,
                  std::ostream& err) {
  if (num_specs <= 0) {
    err << "error: --specs must be positive\n";
    return kExitUsage;
  }
  Rng rng(seed);
  double worst = 0.0;
  bool all_pass = true;
  for (int i = 0; i < num_specs; ++i) {
    const NetworkSpec spec = random_network_spec(rng.derive());
    const GradCheckResult res = finite_difference_check(spec, rng.derive(), 1e-3, tol);
    worst = std::max(worst, res.max_rel_error);
    all_pass = all_pass && res.pass;
    char line[256];
    std::snprintf(line, sizeof(line), "%s spec %d: max_rel_error=%.3e (%zu components) %s\n",
                  res.pass ? "[PASS]" : "[FAIL]", i, res.max_rel_error, res.components,
                  res.spec.c_str());
    out << line;
  }
  char summary[128];
  std::snprintf(summary, sizeof(summary), "%s gradcheck: max_rel_error=%.3e over %d specs\n",
                all_pass ? "[PASS]" : "[FAIL]", worst, num_specs);
  out << summary;
  return all_pass ? kExitOk : kExitThreshold;
}

int cmd_sweep(const std::string& config_path, const std::vector<uint64_t>& seeds,
              const TrainOverrides& overrides, std::ostream& out, std::ostream& err) {
  if (seeds.empty()) {
    err << "error: --seeds must name at least one seed\n";
    return kExitUsage;
  }
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const std::string base =
        overrides.output_dir ? *overrides.output_dir : cfg.output_dir;
    fs::create_directories(base);
    std::ofstream summary(base + "/sweep.csv", std::ios::binary);
    summary << "seed,stage,episodes,env_steps,solved,episodes_to_solve\n";
    std::vector<int> final_solve_episodes;
    for (uint64_t seed : seeds) {
      TrainOverrides o = overrides;
      o.seed = seed;
      o.output_dir = base + "/seed_" + std::to_string(seed);
      const TrainOutcome outcome = run_training(cfg, o);
      for (size_t i = 0; i < outcome.run.stages.size(); ++i) {
        const StageResult& s = outcome.run.stages[i];
        const int solve_ep = episodes_to_threshold(s.curve, cfg.learner.solve_threshold,
                                                   cfg.learner.solve_window);
        summary << seed << ',' << i << ',' << s.episodes_run << ',' << s.env_steps << ','
                << (s.solved ? 1 : 0) << ',' << solve_ep << "\n";
        if (i + 1 == outcome.run.stages.size()) final_solve_episodes.push_back(solve_ep);
      }
      out << "seed " << seed << ": done\n";
    }
    // Median episodes-to-solve on the final stage (unsolved counts as +inf).
    std::sort(final_solve_episodes.begin(), final_solve_episodes.end(), [](int a, int b) {
      const long aa = a < 0 ? std::numeric_limits<long>::max() : a;
      const long bb = b < 0 ? std::numeric_limits<long>::max() : b;
      return aa < bb;
    });
    const int median = final_solve_episodes[final_solve_episodes.size() / 2];
    out << "median episodes-to-solve (final stage): " << median << "\n";
    out << "wrote " << base << "/sweep.csv\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace dimap
