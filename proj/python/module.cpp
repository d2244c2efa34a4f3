#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mbmf/bayesopt.hpp"
#include "mbmf/direct.hpp"
#include "mbmf/dynamics.hpp"
#include "mbmf/env.hpp"
#include "mbmf/gp.hpp"
#include "mbmf/harness.hpp"

namespace py = pybind11;
using namespace mbmf;

namespace {

gp::KernelHyper make_hyper(const Vec& lengthscales, double signal_variance,
                           double noise_variance) {
  gp::KernelHyper h;
  h.lengthscales = lengthscales;
  h.signal_variance = signal_variance;
  h.noise_variance = noise_variance;
  return h;
}

gp::PriorMean wrap_prior(const py::object& prior) {
  if (prior.is_none()) return gp::PriorMean::zero();
  auto fn = prior.cast<std::function<double(const Vec&)>>();
  return gp::PriorMean(std::move(fn));
}

}  // namespace

PYBIND11_MODULE(mbmf, m) {
  m.doc() = "Policy search via Bayesian optimization with a learned-dynamics "
            "cost prior";

  py::class_<gp::KernelHyper>(m, "KernelHyper")
      .def(py::init(&make_hyper), py::arg("lengthscales"),
           py::arg("signal_variance") = 1.0, py::arg("noise_variance") = 1e-6)
      .def_readwrite("lengthscales", &gp::KernelHyper::lengthscales)
      .def_readwrite("signal_variance", &gp::KernelHyper::signal_variance)
      .def_readwrite("noise_variance", &gp::KernelHyper::noise_variance);

  m.def("se_kernel", &gp::se_kernel, py::arg("x1"), py::arg("x2"),
        py::arg("hyper"));

  py::class_<gp::GpModel>(m, "GpModel")
      .def("predict",
           [](const gp::GpModel& g, const Vec& x) {
             auto p = g.predict(x);
             return py::make_tuple(p.mean, p.variance);
           })
      .def_property_readonly("size", &gp::GpModel::size)
      .def_property_readonly("fitted_lml", &gp::GpModel::fitted_lml)
      .def_property_readonly("raw_lengthscales", &gp::GpModel::raw_lengthscales);

  m.def(
      "fit_gp",
      [](const Mat& inputs, const Vec& targets, const py::object& prior,
         int restarts, std::uint64_t seed, int max_points) {
        gp::FitConfig cfg;
        cfg.restarts = restarts;
        cfg.seed = seed;
        cfg.max_points = max_points;
        return gp::fit(inputs, targets, wrap_prior(prior), cfg);
      },
      py::arg("inputs"), py::arg("targets"), py::arg("prior") = py::none(),
      py::arg("restarts") = 5, py::arg("seed") = 0, py::arg("max_points") = 0);

  m.def(
      "log_marginal_likelihood",
      [](const Mat& inputs, const Vec& targets, const gp::KernelHyper& hyper) {
        return gp::log_marginal_likelihood(inputs, targets,
                                           gp::PriorMean::zero(), hyper);
      },
      py::arg("inputs"), py::arg("targets"), py::arg("hyper"));

  m.def(
      "direct_minimize",
      [](const std::function<double(const Vec&)>& objective, const Vec& lower,
         const Vec& upper, int budget, double epsilon) {
        direct_opt::SearchBox box{lower, upper};
        auto r = direct_opt::direct_minimize(objective, box, budget, epsilon);
        return py::make_tuple(r.best_point, r.best_value, r.eval_count);
      },
      py::arg("objective"), py::arg("lower"), py::arg("upper"),
      py::arg("budget"), py::arg("epsilon") = 1e-4);

  m.def("ei_value", &bo::ei_value, py::arg("mu"), py::arg("sigma"),
        py::arg("c_star"), py::arg("xi"));

  py::class_<env::EnvSpec>(m, "EnvSpec")
      .def_readonly("state_dim", &env::EnvSpec::state_dim)
      .def_readonly("action_dim", &env::EnvSpec::action_dim)
      .def_readonly("horizon", &env::EnvSpec::horizon)
      .def_property_readonly("policy_dim", &env::EnvSpec::policy_dim);

  m.def("reference_pointmass", &env::reference_pointmass);
  m.def("reference_pusher", &env::reference_pusher);

  m.def(
      "rollout_real",
      [](const env::EnvSpec& spec, const Vec& theta) {
        env::Trajectory t = env::rollout_real(spec, theta);
        Mat states(t.states.size(), spec.state_dim);
        for (std::size_t i = 0; i < t.states.size(); ++i)
          states.row(static_cast<Eigen::Index>(i)) = t.states[i];
        Mat actions(t.actions.size(), spec.action_dim);
        for (std::size_t i = 0; i < t.actions.size(); ++i)
          actions.row(static_cast<Eigen::Index>(i)) = t.actions[i];
        return py::make_tuple(states, actions, t.realized_cost);
      },
      py::arg("spec"), py::arg("theta"));

  py::class_<dyn::DynamicsModel>(m, "DynamicsModel")
      .def_property_readonly("state_dim", &dyn::DynamicsModel::state_dim)
      .def_property_readonly("action_dim", &dyn::DynamicsModel::action_dim);

  m.def(
      "train_dynamics",
      [](const Mat& states, const Mat& actions, const Mat& next_states,
         std::uint64_t seed, int max_points) {
        dyn::TransitionDataset data(states.cols(), actions.cols());
        data.states = states;
        data.actions = actions;
        data.next_states = next_states;
        gp::FitConfig cfg;
        cfg.seed = seed;
        cfg.max_points = max_points;
        return dyn::train_dynamics(data, cfg);
      },
      py::arg("states"), py::arg("actions"), py::arg("next_states"),
      py::arg("seed") = 0, py::arg("max_points") = 0);

  m.def(
      "expected_cost",
      [](const dyn::DynamicsModel& model, const env::EnvSpec& spec,
         const Vec& theta, int n_particles, std::uint64_t base_seed) {
        dyn::McConfig cfg;
        cfg.n_particles = n_particles;
        cfg.base_seed = base_seed;
        return dyn::expected_cost(model, spec, theta, cfg);
      },
      py::arg("model"), py::arg("spec"), py::arg("theta"),
      py::arg("n_particles") = 200, py::arg("base_seed") = 0);

  m.def(
      "run_experiment",
      [](const std::string& config_path, const std::string& out_dir) {
        harness::ExperimentConfig cfg = harness::load_config(config_path);
        harness::ExperimentResult r = harness::run_experiment(cfg, out_dir);
        py::list rows;
        for (const harness::FinalRow& row : r.agg.finals) {
          py::dict d;
          d["method"] = row.method;
          d["mean"] = row.mean;
          d["std"] = row.std;
          d["n_valid_trials"] = row.n_valid_trials;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config_path"), py::arg("out_dir") = "");
}
