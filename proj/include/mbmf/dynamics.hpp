#pragma once

#include <string>
#include <vector>

#include "mbmf/env.hpp"
#include "mbmf/gp.hpp"

namespace mbmf::dyn {

// Transition triples stored column-per-dimension for direct use as GP
// training matrices.
struct TransitionDataset {
  Mat states;       // R x n
  Mat actions;      // R x m
  Mat next_states;  // R x n

  TransitionDataset() = default;
  TransitionDataset(Eigen::Index state_dim, Eigen::Index action_dim);

  Eigen::Index size() const { return states.rows(); }
  Eigen::Index state_dim() const { return states.cols(); }
  Eigen::Index action_dim() const { return actions.cols(); }

  void append(const Vec& state, const Vec& action, const Vec& next_state);
  void append_trajectory(const env::Trajectory& traj);

  // One row per state-action pair, columns state then action.
  Mat gp_inputs() const;

  void save_csv(const std::string& path) const;
  static TransitionDataset load_csv(const std::string& path);
};

// Posterior over per-dimension state deltas. Interface so tests can inject
// models with analytically known propagation.
class DeltaModel {
 public:
  virtual ~DeltaModel() = default;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index input_dim() const = 0;  // state_dim + action_dim
  // mean/variance get one column per state dimension, one row per input row.
  virtual void predict_delta(const Mat& state_action, Mat& mean,
                             Mat& variance) const = 0;
};

// The learned dynamics f_L: one GP per state dimension on (state, action)
// inputs with zero-mean deltas as targets.
class DynamicsModel final : public DeltaModel {
 public:
  DynamicsModel(std::vector<gp::GpModel> per_dim_gps, Eigen::Index state_dim,
                Eigen::Index action_dim);

  Eigen::Index state_dim() const override { return state_dim_; }
  Eigen::Index action_dim() const { return action_dim_; }
  Eigen::Index input_dim() const override { return state_dim_ + action_dim_; }
  const gp::GpModel& dim_gp(Eigen::Index d) const { return per_dim_gps_.at(d); }

  void predict_delta(const Mat& state_action, Mat& mean,
                     Mat& variance) const override;

 private:
  std::vector<gp::GpModel> per_dim_gps_;
  Eigen::Index state_dim_ = 0;
  Eigen::Index action_dim_ = 0;
};

// All per-dimension GPs see the same rows: any subsampling (fit_config
// .max_points) happens once at the dataset level, not per dimension.
DynamicsModel train_dynamics(const TransitionDataset& data,
                             const gp::FitConfig& fit_config = {});

struct McCaps {
  double penalty = 1e6;       // cost assigned to capped particles
  double sanity_bound = 50.0; // |state component| beyond this caps the particle
};

struct McConfig {
  int n_particles = 200;
  std::uint64_t base_seed = 0;
  McCaps caps;
};

struct TrajectoryEnsemble {
  std::vector<std::vector<Vec>> states;   // [particle][0..T]
  std::vector<std::vector<Vec>> actions;  // [particle][0..T-1]
  Vec per_particle_cost;
  std::vector<bool> capped;  // capped particles carry the penalty cost

  double mean_cost() const { return per_particle_cost.mean(); }
};

// Monte-Carlo particle rollout through the delta model under the linear
// policy theta. Per-particle RNG substreams of rng_seed make the result
// independent of evaluation order. Capped particles freeze at their last
// finite in-bounds state.
TrajectoryEnsemble rollout_mc(const DeltaModel& model, const env::EnvSpec& spec,
                              const Vec& theta, const Vec& init_state,
                              int horizon, int n_particles,
                              std::uint64_t rng_seed, const McCaps& caps = {});
TrajectoryEnsemble rollout_mc(const DeltaModel& model, const env::EnvSpec& spec,
                              const env::CostSpec& cost, const Vec& theta,
                              const Vec& init_state, int horizon,
                              int n_particles, std::uint64_t rng_seed,
                              const McCaps& caps = {});

// C_L(theta): mean per-particle cost from spec.start_state over
// spec.horizon; the MC seed is hash(theta) xor base_seed, so this is a pure
// function of (model, theta, config).
double expected_cost(const DeltaModel& model, const env::EnvSpec& spec,
                     const Vec& theta, const McConfig& config);

}  // namespace mbmf::dyn
