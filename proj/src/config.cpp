#include "dimap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dimap {

namespace {

using nlohmann::json;

/// Wrapper that tracks which keys a section consumed and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    known_.insert(key);
    if (!j_.contains(key)) throw ConfigError("missing required key '" + join(key) + "'");
    return j_.at(key);
  }

  template <typename T>
  T require(const std::string& key) {
    return convert<T>(key, at(key));
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    known_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(key, j_.at(key));
  }

  /// Call after consuming everything; any key left over is a config error.
  void finish() const {
    for (const auto& item : j_.items())
      if (!known_.count(item.key()))
        throw ConfigError("unknown key '" + join(item.key()) + "'");
  }

  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <typename T>
  T convert(const std::string& key, const json& value) {
    try {
      return value.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + join(key) + "' has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

ObjectKind parse_object_kind(const std::string& s, const std::string& key) {
  if (s == "disk") return ObjectKind::disk;
  if (s == "block") return ObjectKind::block;
  throw ConfigError("key '" + key + "' must be \"disk\" or \"block\"");
}

NetworkArch parse_network(const json& j, const std::string& path) {
  Section sec(j, path);
  NetworkArch arch;
  const json& conv = sec.at("conv");
  if (!conv.is_array()) throw ConfigError("key '" + path + ".conv' must be an array");
  for (size_t i = 0; i < conv.size(); ++i) {
    const json& layer = conv[i];
    const std::string where = path + ".conv[" + std::to_string(i) + "]";
    if (!layer.is_array() || layer.size() < 3 || layer.size() > 4)
      throw ConfigError("key '" + where + "' must be [channels, kernel, stride] or "
                        "[channels, kernel, stride, pool]");
    ConvLayerSpec c;
    c.out_channels = layer[0].get<int>();
    c.kernel = layer[1].get<int>();
    c.stride = layer[2].get<int>();
    if (layer.size() == 4) {
      const std::string pool = layer[3].get<std::string>();
      if (pool == "max") {
        c.pool = PoolMode::max;
      } else if (pool == "sum") {
        c.pool = PoolMode::sum;
      } else if (pool == "none") {
        c.pool = PoolMode::none;
      } else {
        throw ConfigError("key '" + where + "' pool must be \"max\", \"sum\" or \"none\"");
      }
    }
    arch.conv.push_back(c);
  }
  arch.fc = sec.require<std::vector<int>>("fc");
  sec.finish();
  return arch;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root_json;
  try {
    root_json = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  Section root(root_json, "");

  cfg.task = root.require<std::string>("task");
  if (cfg.task != "grid-disk" && cfg.task != "block-align")
    throw ConfigError("key 'task' must be \"grid-disk\" or \"block-align\"");
  cfg.learner.seed = root.get<uint64_t>("seed", 1);
  cfg.output_dir = root.get<std::string>("output_dir", "out");

  {
    Section grid(root.at("grid"), "grid");
    cfg.grid.width = grid.require<int>("width");
    cfg.grid.height = grid.require<int>("height");
    cfg.grid.cell_size = grid.get<double>("cell_size", 1.0);
    grid.finish();
    if (cfg.grid.width < 1 || cfg.grid.height < 1)
      throw ConfigError("key 'grid.width'/'grid.height' must be >= 1");
  }

  if (root.has("goal")) {
    Section goal(root.at("goal"), "goal");
    cfg.goal.horizontal_only = goal.get<bool>("horizontal_only", false);
    cfg.goal.align_distance = goal.get<double>("align_distance", 4.0);
    cfg.goal.align_orientation_tol = goal.get<int>("align_orientation_tol", 0);
    goal.finish();
    if (cfg.goal.align_distance < 0.0 || cfg.goal.align_orientation_tol < 0)
      throw ConfigError("key 'goal' thresholds must be non-negative");
  }

  {
    Section deictic(root.at("deictic"), "deictic");
    cfg.learner.deictic.k = deictic.require<int>("k");
    cfg.learner.deictic.crop.window = deictic.require<int>("crop_window");
    const std::string sampling = deictic.get<std::string>("sampling", "nearest");
    if (sampling == "nearest") {
      cfg.learner.deictic.crop.sampling = RotationSampling::nearest;
    } else if (sampling == "bilinear") {
      cfg.learner.deictic.crop.sampling = RotationSampling::bilinear;
    } else {
      throw ConfigError("key 'deictic.sampling' must be \"nearest\" or \"bilinear\"");
    }
    deictic.finish();
    if (cfg.learner.deictic.k < 1) throw ConfigError("key 'deictic.k' must be >= 1");
    if (cfg.learner.deictic.crop.window < 1 || cfg.learner.deictic.crop.window % 2 == 0)
      throw ConfigError("key 'deictic.crop_window' must be odd and >= 1");
  }

  {
    Section learner(root.at("learner"), "learner");
    cfg.algorithm = learner.require<std::string>("algorithm");
    if (cfg.algorithm != "deictic" && cfg.algorithm != "baseline")
      throw ConfigError("key 'learner.algorithm' must be \"deictic\" or \"baseline\"");
    cfg.learner.gamma = learner.get<double>("gamma", 0.9);
    if (!(cfg.learner.gamma > 0.0 && cfg.learner.gamma < 1.0))
      throw ConfigError("key 'learner.gamma' must be in (0,1)");
    cfg.learner.optimizer.learning_rate = learner.get<double>("learning_rate", 0.0003);
    cfg.learner.batch_size = learner.get<int>("batch_size", 10);
    if (cfg.learner.batch_size < 1) throw ConfigError("key 'learner.batch_size' must be >= 1");
    cfg.learner.replay.capacity = learner.get<size_t>("buffer_capacity", 10000);

    if (learner.has("replay")) {
      Section replay(learner.at("replay"), "learner.replay");
      const std::string mode = replay.get<std::string>("mode", "uniform");
      if (mode == "uniform") {
        cfg.learner.replay.mode = ReplayMode::uniform;
      } else if (mode == "prioritized") {
        cfg.learner.replay.mode = ReplayMode::prioritized;
      } else {
        throw ConfigError("key 'learner.replay.mode' must be \"uniform\" or \"prioritized\"");
      }
      cfg.learner.replay.alpha = replay.get<double>("alpha", 0.6);
      cfg.learner.replay.beta = replay.get<double>("beta", 0.4);
      cfg.learner.replay.epsilon = replay.get<double>("epsilon", 1e-6);
      replay.finish();
      if (cfg.learner.replay.epsilon <= 0.0)
        throw ConfigError("key 'learner.replay.epsilon' must be positive");
    }

    {
      Section eps(learner.at("epsilon"), "learner.epsilon");
      cfg.learner.epsilon.start = eps.require<double>("start");
      cfg.learner.epsilon.end = eps.require<double>("end");
      cfg.learner.epsilon.decay_episodes = eps.require<long>("decay_episodes");
      eps.finish();
      if (cfg.learner.epsilon.start < 0.0 || cfg.learner.epsilon.start > 1.0 ||
          cfg.learner.epsilon.end < 0.0 || cfg.learner.epsilon.end > 1.0)
        throw ConfigError("key 'learner.epsilon' values must lie in [0,1]");
    }

    cfg.learner.target_sync_period = learner.get<int>("target_sync_period", 100);
    cfg.learner.use_value_estimate = learner.get<bool>("use_value_estimate", false);
    cfg.learner.use_pruning = learner.get<bool>("use_pruning", false);

    if (learner.has("hierarchy")) {
      Section hier(learner.at("hierarchy"), "learner.hierarchy");
      cfg.learner.hierarchy.enabled = hier.get<bool>("enabled", false);
      cfg.learner.hierarchy.eta = hier.get<double>("eta", 0.2);
      hier.finish();
      if (!(cfg.learner.hierarchy.eta > 0.0 && cfg.learner.hierarchy.eta <= 1.0))
        throw ConfigError("key 'learner.hierarchy.eta' must be in (0,1]");
    }

    cfg.learner.episode_horizon = learner.get<int>("episode_horizon", 10);
    if (cfg.learner.episode_horizon < 1)
      throw ConfigError("key 'learner.episode_horizon' must be >= 1");
    cfg.learner.solve_threshold = learner.get<double>("solve_threshold", 0.8);
    cfg.learner.solve_window = learner.get<int>("solve_window", 100);
    cfg.learner.abort_on_unsolved_stage = learner.get<bool>("abort_on_unsolved_stage", false);
    cfg.learner.arch = parse_network(learner.at("network"), "learner.network");
    learner.finish();
  }

  {
    const json& stages = root.at("curriculum");
    if (!stages.is_array() || stages.empty())
      throw ConfigError("key 'curriculum' must be a non-empty array");
    for (size_t i = 0; i < stages.size(); ++i) {
      const std::string path = "curriculum[" + std::to_string(i) + "]";
      Section stage(stages[i], path);
      CurriculumStage cs;
      cs.object = parse_object_kind(stage.require<std::string>("object"), path + ".object");
      cs.position_stride = stage.get<int>("position_stride", 1);
      cs.num_orientations = stage.require<int>("num_orientations");
      cs.num_objects = stage.get<int>("num_objects", 2);
      cs.episode_budget = stage.get<int>("episode_budget", 0);
      stage.finish();
      if (cs.position_stride < 1) throw ConfigError("key '" + path + ".position_stride' must be >= 1");
      if (cs.num_orientations < 1)
        throw ConfigError("key '" + path + ".num_orientations' must be >= 1");
      if (cs.num_objects < 0) throw ConfigError("key '" + path + ".num_objects' must be >= 0");
      cfg.curriculum.push_back(cs);
    }
  }

  if (root.has("homcheck")) {
    Section hom(root.at("homcheck"), "homcheck");
    cfg.homcheck_stage_index = hom.get<int>("stage_index", 0);
    cfg.homcheck_tol = hom.get<double>("tol", 1e-9);
    cfg.homcheck_state_bound = hom.get<size_t>("state_bound", 1000000);
    hom.finish();
    if (cfg.homcheck_stage_index < 0 ||
        cfg.homcheck_stage_index >= static_cast<int>(cfg.curriculum.size()))
      throw ConfigError("key 'homcheck.stage_index' is out of range");
  }

  root.finish();

  // Cross-field checks.
  const ObjectKind task_object =
      cfg.task == "grid-disk" ? ObjectKind::disk : ObjectKind::block;
  if (cfg.final_stage().object != task_object)
    throw ConfigError("key 'curriculum': the final stage's object must match 'task'");
  if (cfg.algorithm == "baseline" && cfg.curriculum.size() != 1)
    throw ConfigError("key 'curriculum': the baseline learner takes exactly one stage");
  if (cfg.learner.replay.capacity < static_cast<size_t>(cfg.learner.batch_size))
    throw ConfigError("key 'learner.buffer_capacity' must be >= batch_size");
  // Curricula go coarse to fine: the action count never shrinks.
  auto action_count = [&](const CurriculumStage& s) {
    const long nx = (cfg.grid.width + s.position_stride - 1) / s.position_stride;
    const long ny = (cfg.grid.height + s.position_stride - 1) / s.position_stride;
    return nx * ny * s.num_orientations * 2;
  };
  for (size_t i = 1; i < cfg.curriculum.size(); ++i)
    if (action_count(cfg.curriculum[i]) < action_count(cfg.curriculum[i - 1]))
      throw ConfigError("key 'curriculum': stage " + std::to_string(i) +
                        " has fewer actions than the stage before it");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace dimap
