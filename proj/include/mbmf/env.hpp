#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mbmf/common.hpp"

namespace mbmf::env {

enum class EnvKind { PointMass, Pusher };

struct Obstacle {
  Eigen::Vector2d center;
  double radius = 0.0;
};

struct CostWeights {
  double running = 1.0;
  double terminal = 10.0;  // 10x running so reaching the goal dominates
  double action = 0.0;
};

// Everything the simulators and the cost need. Point mass uses the obstacle
// and drag fields; the pusher uses the link/joint/disc fields. Both share
// start, goal, horizon, dt, action bounds and cost weights.
struct EnvSpec {
  EnvKind kind = EnvKind::PointMass;
  Eigen::Index state_dim = 0;
  Eigen::Index action_dim = 0;
  double dt = 0.0;
  int horizon = 0;
  Vec action_lower;
  Vec action_upper;
  Vec start_state;
  Eigen::Vector2d goal{0.0, 0.0};
  CostWeights cost;

  // point mass
  std::vector<Obstacle> obstacles;
  double drag = 0.0;

  // pusher
  Eigen::Vector3d link_lengths{0.0, 0.0, 0.0};
  Eigen::Vector3d joint_lower{0.0, 0.0, 0.0};
  Eigen::Vector3d joint_upper{0.0, 0.0, 0.0};
  double ee_radius = 0.0;
  double object_radius = 0.0;

  void validate() const;
  Eigen::Index policy_dim() const { return action_dim * (state_dim + 1); }
};

// Declared reference instances (the paper gives no coordinates).
EnvSpec reference_pointmass();
EnvSpec reference_pusher();

struct Trajectory {
  std::vector<Vec> states;   // horizon + 1
  std::vector<Vec> actions;  // horizon
  double realized_cost = 0.0;
};

// u = clip(A x + b); theta packs A row-major then b, length m*(n+1).
Vec linear_policy(const Vec& theta, const Vec& state, const EnvSpec& spec);

Vec step_pointmass(const Vec& state, const Vec& action, const EnvSpec& spec);
Vec step_pusher(const Vec& state, const Vec& action, const EnvSpec& spec);
Vec step(const EnvSpec& spec, const Vec& state, const Vec& action);

// The part of the state whose distance to the goal is penalized: the mass
// position for the point mass, the object position for the pusher.
Eigen::Vector2d cost_position(const EnvSpec& spec, const Vec& state);

double running_cost(const EnvSpec& spec, const Vec& state, const Vec& action);
double terminal_cost(const EnvSpec& spec, const Vec& state);
double trajectory_cost(const EnvSpec& spec, const std::vector<Vec>& states,
                       const std::vector<Vec>& actions);

double goal_distance(const EnvSpec& spec, const Vec& state);

// Cost as a pair of callables so rollouts can run under the environment's
// cost (Eq. 2 shape) or a test-supplied one.
struct CostSpec {
  std::function<double(const Vec& state, const Vec& action)> running;
  std::function<double(const Vec& state)> terminal;
};

CostSpec make_cost(const EnvSpec& spec);

// Deterministic closed-loop rollout; `seed` is reserved for optional
// observation noise, which the harness applies to recorded costs instead,
// so the returned trajectory is a pure function of (spec, theta).
Trajectory rollout_real(const EnvSpec& spec, const Vec& theta,
                        std::uint64_t seed = 0);

void save_trajectory_csv(const Trajectory& traj, const EnvSpec& spec,
                         const std::string& path);

}  // namespace mbmf::env
