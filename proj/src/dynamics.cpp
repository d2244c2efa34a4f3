#include "mbmf/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mbmf::dyn {

TransitionDataset::TransitionDataset(Eigen::Index state_dim,
                                     Eigen::Index action_dim)
    : states(0, state_dim), actions(0, action_dim), next_states(0, state_dim) {}

void TransitionDataset::append(const Vec& state, const Vec& action,
                               const Vec& next_state) {
  if (states.cols() == 0 && states.rows() == 0) {
    states.resize(0, state.size());
    actions.resize(0, action.size());
    next_states.resize(0, next_state.size());
  }
  if (state.size() != states.cols() || action.size() != actions.cols() ||
      next_state.size() != next_states.cols())
    throw std::invalid_argument("transition dimensions do not match dataset");
  const Eigen::Index r = states.rows();
  states.conservativeResize(r + 1, Eigen::NoChange);
  actions.conservativeResize(r + 1, Eigen::NoChange);
  next_states.conservativeResize(r + 1, Eigen::NoChange);
  states.row(r) = state;
  actions.row(r) = action;
  next_states.row(r) = next_state;
}

void TransitionDataset::append_trajectory(const env::Trajectory& traj) {
  for (std::size_t t = 0; t < traj.actions.size(); ++t)
    append(traj.states[t], traj.actions[t], traj.states[t + 1]);
}

Mat TransitionDataset::gp_inputs() const {
  Mat in(states.rows(), states.cols() + actions.cols());
  in << states, actions;
  return in;
}

void TransitionDataset::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open transitions file: " + path);
  const Eigen::Index n = state_dim();
  const Eigen::Index m = action_dim();
  for (Eigen::Index d = 0; d < n; ++d) out << (d ? "," : "") << "x_" << d;
  for (Eigen::Index d = 0; d < m; ++d) out << ",u_" << d;
  for (Eigen::Index d = 0; d < n; ++d) out << ",x'_" << d;
  out << '\n';
  for (Eigen::Index r = 0; r < size(); ++r) {
    for (Eigen::Index d = 0; d < n; ++d)
      out << (d ? "," : "") << format_double(states(r, d));
    for (Eigen::Index d = 0; d < m; ++d)
      out << ',' << format_double(actions(r, d));
    for (Eigen::Index d = 0; d < n; ++d)
      out << ',' << format_double(next_states(r, d));
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing transitions file: " + path);
}

TransitionDataset TransitionDataset::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transitions file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty transitions file: " + path);
  Eigen::Index n = 0, m = 0;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) {
      if (col.rfind("x'_", 0) == 0) continue;  // counted via n below
      if (col.rfind("x_", 0) == 0) ++n;
      else if (col.rfind("u_", 0) == 0) ++m;
      else throw std::runtime_error("unexpected transitions column: " + col);
    }
  }
  if (n == 0) throw std::runtime_error("transitions file has no state columns");
  TransitionDataset data(n, m);
  Vec x(n), u(m), xp(n);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    auto next_cell = [&]() {
      if (!std::getline(row, cell, ','))
        throw std::runtime_error("short row in transitions file");
      return std::stod(cell);
    };
    for (Eigen::Index d = 0; d < n; ++d) x[d] = next_cell();
    for (Eigen::Index d = 0; d < m; ++d) u[d] = next_cell();
    for (Eigen::Index d = 0; d < n; ++d) xp[d] = next_cell();
    data.append(x, u, xp);
  }
  return data;
}

DynamicsModel::DynamicsModel(std::vector<gp::GpModel> per_dim_gps,
                             Eigen::Index state_dim, Eigen::Index action_dim)
    : per_dim_gps_(std::move(per_dim_gps)),
      state_dim_(state_dim),
      action_dim_(action_dim) {
  if (static_cast<Eigen::Index>(per_dim_gps_.size()) != state_dim_)
    throw std::invalid_argument("need exactly one GP per state dimension");
  for (const gp::GpModel& g : per_dim_gps_)
    if (g.input_dim() != state_dim_ + action_dim_)
      throw std::invalid_argument("dynamics GP input dimension mismatch");
}

void DynamicsModel::predict_delta(const Mat& state_action, Mat& mean,
                                  Mat& variance) const {
  mean.resize(state_action.rows(), state_dim_);
  variance.resize(state_action.rows(), state_dim_);
  Vec mu, var;
  for (Eigen::Index d = 0; d < state_dim_; ++d) {
    per_dim_gps_[d].predict_batch(state_action, mu, var);
    mean.col(d) = mu;
    variance.col(d) = var;
  }
}

DynamicsModel train_dynamics(const TransitionDataset& data,
                             const gp::FitConfig& fit_config) {
  if (data.size() < 2)
    throw std::invalid_argument("train_dynamics needs at least two transitions");
  Mat inputs = data.gp_inputs();
  Mat deltas = data.next_states - data.states;

  // Subsample once so every per-dimension GP sees identical rows.
  if (fit_config.max_points > 0 && inputs.rows() > fit_config.max_points) {
    std::vector<Eigen::Index> idx(inputs.rows());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(splitmix64(fit_config.seed ^ 0x5AB5A317ULL));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(fit_config.max_points);
    std::sort(idx.begin(), idx.end());
    Mat in2(fit_config.max_points, inputs.cols());
    Mat de2(fit_config.max_points, deltas.cols());
    for (Eigen::Index i = 0; i < in2.rows(); ++i) {
      in2.row(i) = inputs.row(idx[i]);
      de2.row(i) = deltas.row(idx[i]);
    }
    inputs = std::move(in2);
    deltas = std::move(de2);
  }

  std::vector<gp::GpModel> gps;
  gps.reserve(data.state_dim());
  for (Eigen::Index d = 0; d < data.state_dim(); ++d) {
    gp::FitConfig cfg = fit_config;
    cfg.max_points = 0;
    cfg.seed = substream_seed(fit_config.seed, static_cast<std::uint64_t>(d));
    try {
      gps.push_back(gp::fit(inputs, deltas.col(d), gp::PriorMean::zero(), cfg));
    } catch (const std::exception& e) {
      throw FitError("dynamics GP for state dimension " + std::to_string(d) +
                     " failed: " + e.what());
    }
  }
  return DynamicsModel(std::move(gps), data.state_dim(), data.action_dim());
}

namespace {

double standard_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  return dist(rng);
}

bool state_ok(const Vec& x, double bound) {
  return x.allFinite() && x.lpNorm<Eigen::Infinity>() <= bound;
}

TrajectoryEnsemble rollout_core(const DeltaModel& model,
                                const env::EnvSpec& spec,
                                const env::CostSpec& cost, const Vec& theta,
                                const Vec& init_state, int horizon,
                                int n_particles, std::uint64_t rng_seed,
                                const McCaps& caps, bool keep_history) {
  if (n_particles < 1) throw std::invalid_argument("need at least one particle");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (init_state.size() != model.state_dim())
    throw std::invalid_argument("initial state dimension mismatch");

  const Eigen::Index n = model.state_dim();
  const Eigen::Index m = spec.action_dim;
  const int N = n_particles;

  std::vector<std::mt19937_64> rng;
  rng.reserve(N);
  for (int i = 0; i < N; ++i)
    rng.emplace_back(substream_seed(rng_seed, static_cast<std::uint64_t>(i)));

  TrajectoryEnsemble out;
  out.per_particle_cost = Vec::Zero(N);
  out.capped.assign(N, false);
  if (keep_history) {
    out.states.assign(N, {});
    out.actions.assign(N, {});
    for (int i = 0; i < N; ++i) {
      out.states[i].reserve(horizon + 1);
      out.actions[i].reserve(horizon);
      out.states[i].push_back(init_state);
    }
  }

  Mat x = init_state.transpose().replicate(N, 1);  // N x n current states
  Mat q(N, n + m);
  Mat mu, var;
  Vec u(m), xi(n), xn(n);

  for (int t = 0; t < horizon; ++t) {
    for (int i = 0; i < N; ++i) {
      xi = x.row(i);
      u = env::linear_policy(theta, xi, spec);
      q.row(i) << xi.transpose(), u.transpose();
      if (!out.capped[i])
        out.per_particle_cost[i] += cost.running(xi, u);
      if (keep_history) out.actions[i].push_back(u);
    }
    model.predict_delta(q, mu, var);
    for (int i = 0; i < N; ++i) {
      if (!out.capped[i]) {
        xi = x.row(i);
        for (Eigen::Index d = 0; d < n; ++d) {
          double sd = std::sqrt(std::max(var(i, d), 0.0));
          xn[d] = xi[d] + mu(i, d) + sd * standard_normal(rng[i]);
        }
        if (state_ok(xn, caps.sanity_bound)) {
          x.row(i) = xn;
        } else {
          out.capped[i] = true;  // freeze at the last good state
        }
      }
      if (keep_history) out.states[i].push_back(x.row(i));
    }
  }

  for (int i = 0; i < N; ++i) {
    if (out.capped[i]) {
      out.per_particle_cost[i] = caps.penalty;
    } else {
      out.per_particle_cost[i] += cost.terminal(x.row(i));
    }
  }
  return out;
}

}  // namespace

TrajectoryEnsemble rollout_mc(const DeltaModel& model, const env::EnvSpec& spec,
                              const Vec& theta, const Vec& init_state,
                              int horizon, int n_particles,
                              std::uint64_t rng_seed, const McCaps& caps) {
  return rollout_core(model, spec, env::make_cost(spec), theta, init_state,
                      horizon, n_particles, rng_seed, caps, true);
}

TrajectoryEnsemble rollout_mc(const DeltaModel& model, const env::EnvSpec& spec,
                              const env::CostSpec& cost, const Vec& theta,
                              const Vec& init_state, int horizon,
                              int n_particles, std::uint64_t rng_seed,
                              const McCaps& caps) {
  return rollout_core(model, spec, cost, theta, init_state, horizon,
                      n_particles, rng_seed, caps, true);
}

double expected_cost(const DeltaModel& model, const env::EnvSpec& spec,
                     const Vec& theta, const McConfig& config) {
  std::uint64_t seed = hash_vector(theta) ^ config.base_seed;
  TrajectoryEnsemble e =
      rollout_core(model, spec, env::make_cost(spec), theta, spec.start_state,
                   spec.horizon, config.n_particles, seed, config.caps, false);
  return e.mean_cost();
}

}  // namespace mbmf::dyn
