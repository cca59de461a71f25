#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>

#include "p3o/config.hpp"
#include "p3o/env.hpp"
#include "p3o/expert.hpp"
#include "p3o/imitation.hpp"
#include "p3o/track.hpp"

namespace py = pybind11;
using namespace p3o;

namespace {

py::array_t<uint8_t> obs_array(const Observation& obs) {
  const int R = obs.resolution;
  py::array_t<uint8_t> out({3, R, R});
  std::memcpy(out.mutable_data(), obs.u8.data(), obs.u8.size());
  return out;
}

// Env plus its own track, so Python sees one self-contained object.
class PyEnv {
 public:
  PyEnv(uint64_t track_seed, const std::string& preset, uint64_t seed, int resolution)
      : track_(std::make_shared<const Track>(Track::build(make_track_spec(track_seed)))) {
    EnvConfig cfg;
    cfg.resolution = resolution;
    env_ = std::make_unique<Env>(track_, variant_preset(preset), seed, cfg);
  }

  py::array_t<uint8_t> reset() { return obs_array(env_->reset()); }
  py::array_t<uint8_t> reset_random() { return obs_array(env_->reset_random()); }

  py::tuple step(float steer, float throttle) {
    const StepOut out = env_->step(steer, throttle);
    py::dict info;
    info["progress_delta"] = out.progress_delta;
    info["lap_complete"] = out.lap_complete;
    info["offroad"] = out.offroad;
    info["timeout"] = out.timeout;
    return py::make_tuple(obs_array(env_->observation()), out.reward, out.done, info);
  }

  py::array_t<uint8_t> observation() const { return obs_array(env_->observation()); }

  py::tuple expert_action() const {
    const auto a = p3o::expert_action(env_->car(), env_->track(), env_->config());
    return py::make_tuple(a[0], a[1]);
  }

  py::dict state() const {
    const CarState& s = env_->car();
    py::dict d;
    d["x"] = s.x;
    d["y"] = s.y;
    d["heading"] = s.heading;
    d["speed"] = s.speed;
    d["progress"] = s.progress;
    d["step"] = s.step;
    return d;
  }

  bool done() const { return env_->done(); }
  bool lap_complete() const { return env_->lap_complete(); }
  double episode_return() const { return env_->episode_return(); }
  double track_length() const { return env_->track().length(); }

 private:
  std::shared_ptr<const Track> track_;
  std::unique_ptr<Env> env_;
};

}  // namespace

PYBIND11_MODULE(_p3o, m) {
  m.doc() = "Top-down driving environment with render variants (native core)";

  py::class_<PyEnv>(m, "Env")
      .def(py::init<uint64_t, const std::string&, uint64_t, int>(), py::arg("track_seed") = 7,
           py::arg("preset") = "env0", py::arg("seed") = 0, py::arg("resolution") = 48)
      .def("reset", &PyEnv::reset)
      .def("reset_random", &PyEnv::reset_random)
      .def("step", &PyEnv::step, py::arg("steer"), py::arg("throttle"))
      .def("observation", &PyEnv::observation)
      .def("expert_action", &PyEnv::expert_action)
      .def("state", &PyEnv::state)
      .def("done", &PyEnv::done)
      .def("lap_complete", &PyEnv::lap_complete)
      .def("episode_return", &PyEnv::episode_return)
      .def("track_length", &PyEnv::track_length);

  m.def("preset_ids", [] { return variant_preset_ids(); });
  m.def("discretize_action", &discretize_action, py::arg("steer"), py::arg("throttle"));
  m.def(
      "undiscretize_action",
      [](int cls) {
        const auto a = undiscretize_action(cls);
        return py::make_tuple(a[0], a[1]);
      },
      py::arg("cls"));
  m.def("num_action_classes", [] { return int(ActionGrid::kClasses); });
  m.def("default_config_json", [] { return run_config_to_json(RunConfig{}); });
}
