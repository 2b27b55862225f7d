// Python bindings for the workbench's main operations: the grid simulator,
// the deictic mapping, the homomorphism checker, gradient checks, and the
// config-driven train/eval entry points.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dimap/commands.hpp"
#include "dimap/config.hpp"
#include "dimap/deictic.hpp"
#include "dimap/env.hpp"
#include "dimap/gradcheck.hpp"
#include "dimap/homomorphism.hpp"

namespace py = pybind11;
using namespace dimap;

namespace {

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("image must be a 2-D array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 0.0);
  std::memcpy(img.values().data(), a.data(), sizeof(double) * img.values().size());
  return img;
}

py::array_t<double> array_from_image(const Image& img) {
  py::array_t<double> a({img.height(), img.width()});
  std::memcpy(a.mutable_data(), img.values().data(), sizeof(double) * img.values().size());
  return a;
}

py::array_t<double> array_from_patch(const Patch& p) {
  py::array_t<double> a({p.window, p.window});
  std::memcpy(a.mutable_data(), p.values.data(), sizeof(double) * p.values.size());
  return a;
}

ObjectKind object_kind(const std::string& name) {
  if (name == "disk") return ObjectKind::disk;
  if (name == "block") return ObjectKind::block;
  throw std::invalid_argument("object must be 'disk' or 'block'");
}

EffectorAction effector(const std::string& name) {
  if (name == "pick") return EffectorAction::pick;
  if (name == "place") return EffectorAction::place;
  throw std::invalid_argument("effector must be 'pick' or 'place'");
}

const char* tag_name(AbstractTag tag) {
  switch (tag) {
    case AbstractTag::pick: return "pick";
    case AbstractTag::place: return "place";
    default: return "none";
  }
}

py::tuple pose_tuple(const Pose& p) { return py::make_tuple(p.x, p.y, p.orientation); }

py::tuple action_tuple(const Action& a) {
  return py::make_tuple(a.motion.x, a.motion.y, a.motion.orientation,
                        a.effector == EffectorAction::pick ? "pick" : "place");
}

Action action_from_tuple(const py::tuple& t) {
  if (t.size() != 4) throw std::invalid_argument("action must be (x, y, orientation, effector)");
  return {Pose{t[0].cast<int>(), t[1].cast<int>(), t[2].cast<int>()},
          effector(t[3].cast<std::string>())};
}

class PyEnv {
 public:
  PyEnv(int width, int height, const std::string& object, int position_stride,
        int num_orientations, int num_objects, bool horizontal_only, double align_distance,
        int align_orientation_tol, int horizon)
      : env_({width, height},
             {object_kind(object), position_stride, num_orientations, num_objects},
             {horizontal_only, align_distance, align_orientation_tol}, horizon) {}

  py::tuple reset(uint64_t seed) {
    const Observation obs = env_.reset(seed);
    return py::make_tuple(array_from_image(obs.image), obs.theta);
  }

  py::tuple step(const py::tuple& action) {
    const StepResult r = env_.step(action_from_tuple(action));
    return py::make_tuple(array_from_image(r.observation.image), r.observation.theta, r.reward,
                          r.done);
  }

  std::vector<py::tuple> action_space() const {
    std::vector<py::tuple> out;
    out.reserve(env_.action_space().size());
    for (const Action& a : env_.action_space()) out.push_back(action_tuple(a));
    return out;
  }

  std::string render() const { return render_ascii(env_, env_.state()); }
  int horizon() const { return env_.horizon(); }

 private:
  MoveEffectEnv env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "deictic image mapping workbench";

  py::class_<PyEnv>(m, "Env")
      .def(py::init<int, int, const std::string&, int, int, int, bool, double, int, int>(),
           py::arg("width"), py::arg("height"), py::arg("object") = "disk",
           py::arg("position_stride") = 1, py::arg("num_orientations") = 1,
           py::arg("num_objects") = 2, py::arg("horizontal_only") = false,
           py::arg("align_distance") = 4.0, py::arg("align_orientation_tol") = 0,
           py::arg("horizon") = 10)
      .def("reset", &PyEnv::reset, py::arg("seed"),
           "Place the objects at random lattice poses; returns (image, theta).")
      .def("step", &PyEnv::step, py::arg("action"),
           "Apply (x, y, orientation, 'pick'|'place'); returns (image, theta, reward, done).")
      .def("action_space", &PyEnv::action_space)
      .def("render", &PyEnv::render)
      .def_property_readonly("horizon", &PyEnv::horizon);

  m.def(
      "num_reachable_states",
      [](int width, int height, const std::string& object, int position_stride,
         int num_orientations, int num_objects, size_t bound) {
        return enumerate_states({width, height},
                                {object_kind(object), position_stride, num_orientations,
                                 num_objects},
                                {}, bound)
            .size();
      },
      py::arg("width"), py::arg("height"), py::arg("object") = "disk",
      py::arg("position_stride") = 1, py::arg("num_orientations") = 1, py::arg("num_objects") = 2,
      py::arg("bound") = 1000000,
      "Exhaustive count of reachable simulator states (small stages only).");

  m.def(
      "crop",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, int x,
         int y, int orientation, int window, int num_orientations, const std::string& sampling) {
        CropSpec spec{window};
        if (sampling == "bilinear") spec.sampling = RotationSampling::bilinear;
        else if (sampling != "nearest") throw std::invalid_argument("unknown sampling rule");
        return array_from_patch(
            crop(image_from_array(image), Pose{x, y, orientation}, spec, num_orientations));
      },
      py::arg("image"), py::arg("x"), py::arg("y"), py::arg("orientation") = 0,
      py::arg("window") = 3, py::arg("num_orientations") = 1, py::arg("sampling") = "nearest",
      "Window of the image centered on and aligned with the pose.");

  m.def(
      "action_map",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
         const py::tuple& action, int window, int num_orientations) {
        const AbstractAction a = action_map(image_from_array(image), action_from_tuple(action),
                                            CropSpec{window}, num_orientations);
        return py::make_tuple(array_from_patch(a.patch), tag_name(a.tag));
      },
      py::arg("image"), py::arg("action"), py::arg("window") = 3, py::arg("num_orientations") = 1,
      "Deictic encoding of an action: (canonical patch, effector tag).");

  m.def(
      "fix",
      [](const py::tuple& pose) {
        if (pose.size() != 3) throw std::invalid_argument("pose must be (x, y, orientation)");
        return pose_tuple(
            fix(Pose{pose[0].cast<int>(), pose[1].cast<int>(), pose[2].cast<int>()}));
      },
      py::arg("pose"), "Project a pose to orientation zero at the same position.");

  m.def(
      "fix_inverse",
      [](const py::tuple& pose, int num_orientations) {
        if (pose.size() != 3) throw std::invalid_argument("pose must be (x, y, orientation)");
        std::vector<py::tuple> out;
        for (const Pose& p : fix_inverse(
                 Pose{pose[0].cast<int>(), pose[1].cast<int>(), pose[2].cast<int>()},
                 num_orientations))
          out.push_back(pose_tuple(p));
        return out;
      },
      py::arg("pose"), py::arg("num_orientations"),
      "All poses at the position, one per orientation index.");

  m.def(
      "prune",
      [](const std::vector<py::tuple>& actions,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& image, int window,
         int num_orientations) {
        std::vector<Action> parsed;
        parsed.reserve(actions.size());
        for (const py::tuple& t : actions) parsed.push_back(action_from_tuple(t));
        std::vector<py::tuple> out;
        for (const Action& a :
             prune(parsed, image_from_array(image), CropSpec{window}, num_orientations))
          out.push_back(action_tuple(a));
        return out;
      },
      py::arg("actions"), py::arg("image"), py::arg("window") = 3,
      py::arg("num_orientations") = 1,
      "Keep the actions whose crop window contains a strictly positive cell.");

  m.def(
      "homcheck",
      [](const std::string& config_file) {
        const ExperimentConfig cfg = load_config(config_file);
        HomcheckParams params;
        params.grid = cfg.grid;
        params.stage = cfg.curriculum[cfg.homcheck_stage_index];
        params.goal = cfg.goal;
        params.deictic = cfg.learner.deictic;
        params.gamma = cfg.learner.gamma;
        params.tol = cfg.homcheck_tol;
        params.state_bound = cfg.homcheck_state_bound;
        const AbstractionReport report = run_homcheck(params);
        const nlohmann::json j = nlohmann::json::parse(report.to_json());
        py::dict out;
        for (const auto& [key, value] : j.items()) {
          if (value.is_boolean()) out[key.c_str()] = value.get<bool>();
          else if (value.is_number_integer()) out[key.c_str()] = value.get<long>();
          else out[key.c_str()] = value.get<double>();
        }
        return out;
      },
      py::arg("config_file"),
      "Brute-force homomorphism verification; returns the report as a dict.");

  m.def(
      "gradcheck",
      [](uint64_t seed, int specs, double tol) {
        Rng rng(seed);
        double worst = 0.0;
        bool ok = true;
        for (int i = 0; i < specs; ++i) {
          const GradCheckResult res =
              finite_difference_check(random_network_spec(rng.derive()), rng.derive(), 1e-3, tol);
          worst = std::max(worst, res.max_rel_error);
          ok = ok && res.pass;
        }
        py::dict out;
        out["pass"] = ok;
        out["max_rel_error"] = worst;
        out["specs"] = specs;
        return out;
      },
      py::arg("seed") = 0, py::arg("specs") = 10, py::arg("tol") = 1e-4,
      "Finite-difference verification of the network gradients.");

  m.def(
      "train",
      [](const std::string& config_file, std::optional<std::string> output_dir,
         std::optional<uint64_t> seed, std::optional<int> budget) {
        TrainOverrides o;
        o.output_dir = std::move(output_dir);
        o.seed = seed;
        o.budget = budget;
        std::ostringstream out, err;
        const int code = cmd_train(config_file, o, out, err);
        if (code != kExitOk) throw std::runtime_error(err.str().empty() ? out.str() : err.str());
        return out.str();
      },
      py::arg("config_file"), py::arg("output_dir") = std::nullopt,
      py::arg("seed") = std::nullopt, py::arg("budget") = std::nullopt,
      "Run the config's training protocol; returns the command's summary text.");

  m.def(
      "evaluate",
      [](const std::string& params_dir, const std::string& config_file, int episodes,
         std::optional<uint64_t> seed) {
        const ExperimentConfig cfg = load_config(config_file);
        EvalResult res;
        if (cfg.algorithm == "deictic") {
          TrainConfig lc = cfg.learner;
          if (seed) lc.seed = *seed;
          DeicticAgent agent(lc);
          agent.load(params_dir);
          res = evaluate_policy(agent, cfg.grid, cfg.goal, cfg.final_stage(), episodes, lc.seed);
        } else {
          MoveEffectEnv env(cfg.grid, cfg.final_stage(), cfg.goal, cfg.learner.episode_horizon);
          TrainConfig lc = cfg.learner;
          if (seed) lc.seed = *seed;
          BaselineAgent agent(lc, cfg.grid, static_cast<int>(env.action_space().size()));
          agent.load(params_dir);
          res = evaluate_baseline(agent, cfg.grid, cfg.goal, cfg.final_stage(), episodes,
                                  lc.seed);
        }
        py::dict out;
        out["success_rate"] = res.success_rate;
        out["mean_steps"] = res.mean_steps;
        out["episodes"] = res.episodes;
        return out;
      },
      py::arg("params_dir"), py::arg("config_file"), py::arg("episodes") = 200,
      py::arg("seed") = std::nullopt, "Greedy rollouts of saved parameters.");
}
