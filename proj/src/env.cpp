#include "mbmf/env.hpp"

#include <cmath>
#include <fstream>

namespace mbmf::env {

namespace {

Vec clip(const Vec& v, const Vec& lo, const Vec& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

void EnvSpec::validate() const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (kind == EnvKind::PointMass) {
    if (state_dim != 4 || action_dim != 2)
      throw ConfigError("point mass requires state_dim 4, action_dim 2");
  } else {
    if (state_dim != 5 || action_dim != 2)
      throw ConfigError("pusher requires state_dim 5, action_dim 2");
    if ((link_lengths.array() <= 0.0).any())
      throw ConfigError("pusher link lengths must be positive");
    if (!(ee_radius > 0.0) || !(object_radius > 0.0))
      throw ConfigError("pusher disc radii must be positive");
  }
  if (action_lower.size() != action_dim || action_upper.size() != action_dim)
    throw ConfigError("action bounds dimension mismatch");
  for (Eigen::Index d = 0; d < action_dim; ++d)
    if (!(action_lower[d] < action_upper[d]))
      throw ConfigError("action bounds require lower < upper");
  if (start_state.size() != state_dim)
    throw ConfigError("start state dimension mismatch");
  if (cost.running < 0.0 || cost.terminal < 0.0 || cost.action < 0.0)
    throw ConfigError("cost weights must be non-negative");
  for (const Obstacle& ob : obstacles) {
    if (!(ob.radius > 0.0)) throw ConfigError("obstacle radius must be positive");
    if ((cost_position(*this, start_state) - ob.center).norm() < ob.radius)
      throw ConfigError("start state lies inside an obstacle");
    if ((goal - ob.center).norm() < ob.radius)
      throw ConfigError("goal lies inside an obstacle");
  }
}

EnvSpec reference_pointmass() {
  EnvSpec s;
  s.kind = EnvKind::PointMass;
  s.state_dim = 4;
  s.action_dim = 2;
  s.dt = 0.05;
  s.horizon = 50;
  s.action_lower = Vec::Constant(2, -1.0);
  s.action_upper = Vec::Constant(2, 1.0);
  s.start_state = Vec::Zero(4);
  s.start_state[0] = 0.1;
  s.start_state[1] = 0.1;
  s.goal = {0.9, 0.9};
  s.obstacles = {{{0.35, 0.35}, 0.12}, {{0.65, 0.65}, 0.12}};
  s.drag = 0.1;
  return s;
}

EnvSpec reference_pusher() {
  EnvSpec s;
  s.kind = EnvKind::Pusher;
  s.state_dim = 5;
  s.action_dim = 2;
  s.dt = 0.1;
  s.horizon = 30;
  s.action_lower = Vec::Constant(2, -1.0);
  s.action_upper = Vec::Constant(2, 1.0);
  s.start_state = Vec::Zero(5);
  s.start_state[0] = 0.0;
  s.start_state[1] = 0.9;
  s.start_state[2] = 0.0;
  // object rests just outside the end-effector disc; a clockwise sweep of
  // joint 1 bulldozes it toward the goal
  s.start_state[3] = 1.05;
  s.start_state[4] = 0.40;
  s.goal = {1.2, 0.3};
  s.link_lengths = {0.5, 0.4, 0.3};
  s.joint_lower = {-3.0, -3.0, -3.0};
  s.joint_upper = {3.0, 3.0, 3.0};
  s.ee_radius = 0.05;
  s.object_radius = 0.08;
  return s;
}

Vec linear_policy(const Vec& theta, const Vec& state, const EnvSpec& spec) {
  const Eigen::Index n = spec.state_dim;
  const Eigen::Index m = spec.action_dim;
  if (theta.size() != m * (n + 1))
    throw std::invalid_argument("policy parameter length must be m*(n+1)");
  if (state.size() != n)
    throw std::invalid_argument("state dimension mismatch");
  // theta = [A row-major | b]
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      gains(theta.data(), m, n);
  Vec u = gains * state + theta.tail(m);
  return clip(u, spec.action_lower, spec.action_upper);
}

Vec step_pointmass(const Vec& state, const Vec& action, const EnvSpec& spec) {
  Eigen::Vector2d p = state.head<2>();
  Eigen::Vector2d v = state.segment<2>(2);
  Eigen::Vector2d a = clip(action, spec.action_lower, spec.action_upper);
  v += spec.dt * (a - spec.drag * v);
  p += spec.dt * v;
  for (const Obstacle& ob : spec.obstacles) {
    Eigen::Vector2d off = p - ob.center;
    double dist = off.norm();
    if (dist >= ob.radius) continue;
    Eigen::Vector2d n;
    if (dist > 1e-12) {
      n = off / dist;
    } else {
      // Center hit: fall back to the pre-step direction, then to x.
      Eigen::Vector2d prev = state.head<2>() - ob.center;
      n = prev.norm() > 1e-12 ? prev.normalized() : Eigen::Vector2d(1.0, 0.0);
    }
    p = ob.center + ob.radius * n;
    double inward = v.dot(n);
    if (inward < 0.0) v -= inward * n;
  }
  Vec next(4);
  next << p, v;
  return next;
}

namespace {

Eigen::Vector2d pusher_ee(const Eigen::Vector3d& q, const Eigen::Vector3d& l) {
  double a1 = q[0];
  double a2 = q[0] + q[1];
  double a3 = q[0] + q[1] + q[2];
  return {l[0] * std::cos(a1) + l[1] * std::cos(a2) + l[2] * std::cos(a3),
          l[0] * std::sin(a1) + l[1] * std::sin(a2) + l[2] * std::sin(a3)};
}

}  // namespace

Vec step_pusher(const Vec& state, const Vec& action, const EnvSpec& spec) {
  Eigen::Vector3d q = state.head<3>();
  Eigen::Vector2d obj = state.tail<2>();
  Vec u = clip(action, spec.action_lower, spec.action_upper);
  q[0] += spec.dt * u[0];
  q[1] += spec.dt * u[1];
  // joint 3 is passive and held fixed
  q = q.cwiseMax(spec.joint_lower).cwiseMin(spec.joint_upper);
  Eigen::Vector2d ee = pusher_ee(q, spec.link_lengths);
  Eigen::Vector2d off = obj - ee;
  double dist = off.norm();
  double reach = spec.ee_radius + spec.object_radius;
  if (dist < reach) {
    Eigen::Vector2d n =
        dist > 1e-12 ? Eigen::Vector2d(off / dist) : Eigen::Vector2d(1.0, 0.0);
    obj = ee + reach * n;  // quasi-static push: resolve penetration exactly
  }
  Vec next(5);
  next << q, obj;
  return next;
}

Vec step(const EnvSpec& spec, const Vec& state, const Vec& action) {
  return spec.kind == EnvKind::PointMass ? step_pointmass(state, action, spec)
                                         : step_pusher(state, action, spec);
}

Eigen::Vector2d cost_position(const EnvSpec& spec, const Vec& state) {
  return spec.kind == EnvKind::PointMass
             ? Eigen::Vector2d(state.head<2>())
             : Eigen::Vector2d(state.tail<2>());
}

double running_cost(const EnvSpec& spec, const Vec& state, const Vec& action) {
  double c = spec.cost.running *
             (cost_position(spec, state) - spec.goal).squaredNorm();
  if (spec.cost.action > 0.0) c += spec.cost.action * action.squaredNorm();
  return c;
}

double terminal_cost(const EnvSpec& spec, const Vec& state) {
  return spec.cost.terminal *
         (cost_position(spec, state) - spec.goal).squaredNorm();
}

double trajectory_cost(const EnvSpec& spec, const std::vector<Vec>& states,
                       const std::vector<Vec>& actions) {
  if (states.size() != actions.size() + 1)
    throw std::invalid_argument("trajectory needs one more state than actions");
  double c = 0.0;
  for (std::size_t t = 0; t < actions.size(); ++t)
    c += running_cost(spec, states[t], actions[t]);
  return c + terminal_cost(spec, states.back());
}

double goal_distance(const EnvSpec& spec, const Vec& state) {
  return (cost_position(spec, state) - spec.goal).norm();
}

CostSpec make_cost(const EnvSpec& spec) {
  CostSpec c;
  c.running = [spec](const Vec& state, const Vec& action) {
    return running_cost(spec, state, action);
  };
  c.terminal = [spec](const Vec& state) { return terminal_cost(spec, state); };
  return c;
}

Trajectory rollout_real(const EnvSpec& spec, const Vec& theta, std::uint64_t) {
  Trajectory traj;
  traj.states.reserve(spec.horizon + 1);
  traj.actions.reserve(spec.horizon);
  Vec x = spec.start_state;
  traj.states.push_back(x);
  for (int t = 0; t < spec.horizon; ++t) {
    Vec u = linear_policy(theta, x, spec);
    x = step(spec, x, u);
    traj.actions.push_back(std::move(u));
    traj.states.push_back(x);
  }
  traj.realized_cost = trajectory_cost(spec, traj.states, traj.actions);
  return traj;
}

void save_trajectory_csv(const Trajectory& traj, const EnvSpec& spec,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trajectory file: " + path);
  out << "step";
  for (Eigen::Index d = 0; d < spec.state_dim; ++d) out << ",x" << d;
  for (Eigen::Index d = 0; d < spec.action_dim; ++d) out << ",u" << d;
  out << ",running_cost\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    out << t;
    for (Eigen::Index d = 0; d < spec.state_dim; ++d)
      out << ',' << format_double(traj.states[t][d]);
    const bool has_action = t < traj.actions.size();
    for (Eigen::Index d = 0; d < spec.action_dim; ++d) {
      out << ',';
      if (has_action) out << format_double(traj.actions[t][d]);
    }
    out << ','
        << format_double(has_action
                             ? running_cost(spec, traj.states[t], traj.actions[t])
                             : terminal_cost(spec, traj.states[t]))
        << '\n';
  }
  if (!out) throw std::runtime_error("failed writing trajectory file: " + path);
}

}  // namespace mbmf::env
