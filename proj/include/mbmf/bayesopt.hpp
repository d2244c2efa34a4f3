#pragma once

#include "mbmf/direct.hpp"
#include "mbmf/gp.hpp"

namespace mbmf::bo {

// D2: policy parameters with their observed real-system costs.
struct CostDataset {
  Mat thetas;  // R x d
  Vec costs;

  Eigen::Index size() const { return thetas.rows(); }
  Eigen::Index dim() const { return thetas.cols(); }
  void append(const Vec& theta, double cost);
};

// GP response surface over theta with the (possibly zero) C_L prior mean.
// Immutable once built; rebuilt from scratch every BO iteration.
struct ResponseSurface {
  gp::GpModel gp;
  Vec incumbent_theta;
  double incumbent_cost = 0.0;  // C*: best observed, not best posterior
  double xi = 0.0;              // EI exploration offset
};

// Fits the surface GP on D2. One observation is not enough to optimize
// hyperparameters, so that case uses fixed bootstrap hyperparameters and
// exact interpolation; from two points on the GP is fit by marginal
// likelihood. The prior is only ever evaluated at D2 inputs and at
// prediction queries.
ResponseSurface build_response_surface(const CostDataset& data,
                                       const gp::PriorMean& prior,
                                       const gp::FitConfig& fit_config = {});

// Closed-form expected improvement for minimization.
double ei_value(double mu, double sigma, double c_star, double xi);

double expected_improvement(const ResponseSurface& surface, const Vec& theta);

struct ProposeConfig {
  int budget = 0;  // DIRECT evaluations; 0 = 200 * dim
  double epsilon = 1e-4;
};

// Alg. 1 line 8: minimize -EI over the theta box with DIRECT.
Vec propose_next(const ResponseSurface& surface,
                 const direct_opt::SearchBox& box,
                 const ProposeConfig& config = {});

}  // namespace mbmf::bo
