#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dimap/commands.hpp"
#include "dimap/config.hpp"

using namespace dimap;

namespace {

std::string minimal_config(const std::string& learner_extra = "",
                           const std::string& root_extra = "") {
  return R"({
    "task": "grid-disk",
    "grid": {"width": 3, "height": 3},
    "deictic": {"k": 2, "crop_window": 3},
    "learner": {
      "algorithm": "deictic",
      "epsilon": {"start": 0.5, "end": 0.1, "decay_episodes": 100},
      "network": {"conv": [[4, 3, 1]], "fc": [8]})" +
         learner_extra + R"(
    },
    "curriculum": [
      {"object": "disk", "num_orientations": 1, "episode_budget": 50}
    ])" +
         root_extra + R"(
  })";
}

}  // namespace

TEST_CASE("a minimal config parses with documented defaults") {
  const ExperimentConfig cfg = parse_config(minimal_config());
  CHECK(cfg.task == "grid-disk");
  CHECK(cfg.algorithm == "deictic");
  CHECK(cfg.learner.gamma == 0.9);
  CHECK(cfg.learner.batch_size == 10);
  CHECK(cfg.learner.replay.capacity == 10000);
  CHECK(cfg.learner.replay.mode == ReplayMode::uniform);
  CHECK(cfg.learner.episode_horizon == 10);
  CHECK(cfg.learner.optimizer.learning_rate == 0.0003);
  CHECK(cfg.learner.deictic.k == 2);
  CHECK(cfg.learner.deictic.crop.window == 3);
  CHECK(cfg.learner.seed == 1);
  CHECK(cfg.goal.align_distance == 4.0);
  CHECK(cfg.curriculum.size() == 1);
  CHECK(cfg.curriculum[0].position_stride == 1);
  CHECK(cfg.curriculum[0].num_objects == 2);
}

TEST_CASE("unknown keys are rejected with their full path") {
  const std::string bad = minimal_config(R"(, "replay": {"mode": "uniform", "alpa": 0.6})");
  CHECK_THROWS_WITH_AS(parse_config(bad),
                       doctest::Contains("learner.replay.alpa"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(minimal_config("", R"(, "grid_size": 4)")),
                       doctest::Contains("grid_size"), ConfigError);
}

TEST_CASE("missing required keys are named") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"task": "grid-disk"})"), doctest::Contains("grid"),
                       ConfigError);
  const std::string no_eps = R"({
    "task": "grid-disk",
    "grid": {"width": 3, "height": 3},
    "deictic": {"k": 2, "crop_window": 3},
    "learner": {"algorithm": "deictic", "network": {"conv": [], "fc": []}},
    "curriculum": [{"object": "disk", "num_orientations": 1}]
  })";
  CHECK_THROWS_WITH_AS(parse_config(no_eps), doctest::Contains("learner.epsilon"), ConfigError);
}

TEST_CASE("malformed values are rejected") {
  CHECK_THROWS_AS(parse_config("not json at all"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(minimal_config(R"(, "gamma": 1.5)")),
                       doctest::Contains("gamma"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(minimal_config(R"(, "hierarchy": {"eta": 0.0})")),
                       doctest::Contains("eta"), ConfigError);
  const std::string bad_task = R"({"task": "tower-of-hanoi"})";
  CHECK_THROWS_WITH_AS(parse_config(bad_task), doctest::Contains("task"), ConfigError);
}

TEST_CASE("cross-field validation catches mismatched curricula") {
  auto replace_once = [](std::string s, const std::string& from, const std::string& to) {
    const size_t at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
  };
  // Final stage object must match the task.
  const std::string wrong_object =
      replace_once(minimal_config(), "\"object\": \"disk\"", "\"object\": \"block\"");
  CHECK_THROWS_WITH_AS(parse_config(wrong_object), doctest::Contains("task"), ConfigError);
  // Baseline takes exactly one stage.
  std::string two_stages =
      replace_once(minimal_config(), "\"algorithm\": \"deictic\"", "\"algorithm\": \"baseline\"");
  two_stages = replace_once(
      two_stages,
      "{\"object\": \"disk\", \"num_orientations\": 1, \"episode_budget\": 50}",
      "{\"object\": \"disk\", \"num_orientations\": 1},\n"
      "      {\"object\": \"disk\", \"num_orientations\": 1}");
  CHECK_THROWS_WITH_AS(parse_config(two_stages), doctest::Contains("one stage"), ConfigError);
}

TEST_CASE("every sample config carries the published hyperparameters") {
  namespace fs = std::filesystem;
  int checked = 0;
  for (const auto& entry : fs::directory_iterator(DIMAP_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    const ExperimentConfig cfg = load_config(entry.path().string());
    CAPTURE(entry.path().string());
    CHECK(cfg.learner.replay.capacity == 10000);
    CHECK(cfg.learner.batch_size == 10);
    CHECK(cfg.learner.optimizer.learning_rate == 0.0003);
    CHECK(cfg.learner.episode_horizon == 10);
    CHECK(cfg.learner.epsilon.end == 0.1);
    if (cfg.algorithm == "deictic") {
      CHECK(cfg.learner.epsilon.start == 0.5);
      CHECK(cfg.learner.replay.mode == ReplayMode::prioritized);
      CHECK(cfg.learner.replay.alpha == 0.6);
      CHECK(cfg.learner.replay.beta == 0.4);
      CHECK(cfg.learner.replay.epsilon == 1e-6);
      CHECK(cfg.learner.hierarchy.eta == 0.2);
    } else {
      CHECK(cfg.learner.epsilon.start == 1.0);
      CHECK(cfg.learner.replay.mode == ReplayMode::uniform);
    }
    checked += 1;
  }
  CHECK(checked >= 8);
}

TEST_CASE("cmd_train rejects a missing config file with a usage exit") {
  std::ostringstream out, err;
  CHECK(cmd_train("/nonexistent/config.json", {}, out, err) == kExitUsage);
  CHECK(err.str().find("config error") != std::string::npos);
}

TEST_CASE("cmd_eval rejects a non-positive episode count") {
  std::ostringstream out, err;
  CHECK(cmd_eval("params", "config.json", 0, 0.0, std::nullopt, out, err) == kExitUsage);
}

TEST_CASE("cmd_homcheck certifies the shipped 3x3 instance and refutes the broken one") {
  std::ostringstream out, err;
  const std::string good = std::string(DIMAP_CONFIG_DIR) + "/homcheck_grid_disk_3x3.json";
  CHECK(cmd_homcheck(good, true, std::nullopt, out, err) == kExitOk);
  CHECK(out.str().find("\"well_defined\": true") != std::string::npos);

  std::ostringstream out2, err2;
  const std::string broken = std::string(DIMAP_CONFIG_DIR) + "/homcheck_broken_crop1.json";
  CHECK(cmd_homcheck(broken, true, std::nullopt, out2, err2) == kExitThreshold);
  CHECK(out2.str().find("\"well_defined\": false") != std::string::npos);
}

TEST_CASE("cmd_gradcheck passes on healthy gradients") {
  std::ostringstream out, err;
  CHECK(cmd_gradcheck(11, 3, 1e-4, out, err) == kExitOk);
  CHECK(out.str().find("[PASS] gradcheck") != std::string::npos);
}

TEST_CASE("cmd_train writes byte-identical curves for identical config and seed") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dimap_cli_test";
  fs::create_directories(dir);
  const fs::path config_path = dir / "config.json";
  {
    std::ofstream os(config_path);
    os << minimal_config();
  }
  auto read = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  TrainOverrides a;
  a.output_dir = (dir / "a").string();
  TrainOverrides b;
  b.output_dir = (dir / "b").string();
  std::ostringstream out, err;
  REQUIRE(cmd_train(config_path.string(), a, out, err) == kExitOk);
  REQUIRE(cmd_train(config_path.string(), b, out, err) == kExitOk);
  const std::string curve_a = read(dir / "a" / "curve.csv");
  CHECK(curve_a == read(dir / "b" / "curve.csv"));
  CHECK(curve_a.rfind("stage,episode,steps,reward,epsilon,mean_loss\n", 0) == 0);

  // A different seed changes only the stream, and the output with it.
  TrainOverrides c;
  c.output_dir = (dir / "c").string();
  c.seed = 999;
  REQUIRE(cmd_train(config_path.string(), c, out, err) == kExitOk);
  CHECK(read(dir / "c" / "curve.csv") != curve_a);

  // Saved parameters load back for evaluation.
  std::ostringstream eval_out, eval_err;
  const int code = cmd_eval((dir / "a").string(), config_path.string(), 20, 0.0, std::nullopt,
                            eval_out, eval_err);
  CHECK(code == kExitOk);
  CHECK(eval_out.str().find("success_rate=") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cmd_sweep summarizes per-seed training") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dimap_sweep_test";
  fs::create_directories(dir);
  const fs::path config_path = dir / "config.json";
  {
    std::ofstream os(config_path);
    os << minimal_config();
  }
  TrainOverrides o;
  o.output_dir = (dir / "sweep").string();
  std::ostringstream out, err;
  CHECK(cmd_sweep(config_path.string(), {1, 2}, o, out, err) == kExitOk);
  CHECK(fs::exists(dir / "sweep" / "sweep.csv"));
  CHECK(fs::exists(dir / "sweep" / "seed_1" / "curve.csv"));
  CHECK(fs::exists(dir / "sweep" / "seed_2" / "curve.csv"));
  CHECK(out.str().find("median episodes-to-solve") != std::string::npos);
  fs::remove_all(dir);
}
