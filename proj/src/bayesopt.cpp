#include "mbmf/bayesopt.hpp"

#include <cmath>

namespace mbmf::bo {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvSqrt2 = 0.70710678118654752440;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

}  // namespace

void CostDataset::append(const Vec& theta, double cost) {
  if (!std::isfinite(cost))
    throw std::invalid_argument("observed cost must be finite");
  if (thetas.rows() == 0 && thetas.cols() == 0)
    thetas.resize(0, theta.size());
  if (theta.size() != thetas.cols())
    throw std::invalid_argument("theta dimension does not match dataset");
  const Eigen::Index r = thetas.rows();
  thetas.conservativeResize(r + 1, Eigen::NoChange);
  costs.conservativeResize(r + 1);
  thetas.row(r) = theta;
  costs[r] = cost;
}

ResponseSurface build_response_surface(const CostDataset& data,
                                       const gp::PriorMean& prior,
                                       const gp::FitConfig& fit_config) {
  if (data.size() < 1)
    throw std::invalid_argument("response surface needs at least one observation");
  if (!data.costs.allFinite())
    throw std::invalid_argument("observed costs must be finite");

  auto build_gp = [&]() -> gp::GpModel {
    if (data.size() > 1) return gp::fit(data.thetas, data.costs, prior, fit_config);
    gp::KernelHyper h;
    h.lengthscales = Vec::Constant(data.dim(), 2.5);
    double resid = data.costs[0] - prior(data.thetas.row(0));
    h.signal_variance = std::max(1.0, resid * resid);
    h.noise_variance = 0.0;  // noise-free: exact interpolation of the point
    return gp::GpModel::with_hyper(data.thetas, data.costs, prior, h);
  };

  Eigen::Index best;
  double c_star = data.costs.minCoeff(&best);
  ResponseSurface s{
      build_gp(), data.thetas.row(best), c_star,
      std::max(0.01 * (data.costs.maxCoeff() - data.costs.minCoeff()), 1e-6)};
  return s;
}

double ei_value(double mu, double sigma, double c_star, double xi) {
  const double gap = c_star - xi - mu;
  if (!(sigma > 0.0)) return std::max(gap, 0.0);
  const double z = gap / sigma;
  return std::max(gap * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

double expected_improvement(const ResponseSurface& surface, const Vec& theta) {
  gp::GpModel::Prediction p = surface.gp.predict(theta);
  return ei_value(p.mean, std::sqrt(std::max(p.variance, 0.0)),
                  surface.incumbent_cost, surface.xi);
}

Vec propose_next(const ResponseSurface& surface,
                 const direct_opt::SearchBox& box,
                 const ProposeConfig& config) {
  box.validate();
  if (box.dim() != surface.gp.input_dim())
    throw std::invalid_argument("search box does not match theta dimension");
  int budget = config.budget > 0
                   ? config.budget
                   : 200 * static_cast<int>(box.dim());
  auto objective = [&surface](const Vec& theta) {
    return -expected_improvement(surface, theta);
  };
  direct_opt::DirectResult r =
      direct_opt::direct_minimize(objective, box, budget, config.epsilon);
  if (r.best_value < 0.0) return r.best_point;
  // EI vanished at every probe: a confident prior predicts no improvement
  // anywhere and its posterior sigma underflows the acquisition. Exploit the
  // model instead of degenerating to the box center; if the model is wrong,
  // the new observation widens the surface's residuals and EI comes back.
  auto mean_objective = [&surface](const Vec& theta) {
    return surface.gp.predict(theta).mean;
  };
  return direct_opt::direct_minimize(mean_objective, box, budget,
                                     config.epsilon)
      .best_point;
}

}  // namespace mbmf::bo
