#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mbmf/common.hpp"

namespace mbmf::gp {

// Hyperparameters of the ARD squared-exponential kernel. Lengthscales are
// in the units of whatever input space the kernel is evaluated in.
struct KernelHyper {
  Vec lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  void validate(Eigen::Index input_dim) const;
};

double se_kernel(const Vec& x1, const Vec& x2, const KernelHyper& hyper);

// Deterministic scalar function with memoised evaluations. The response
// surface prior C_L(theta) is a Monte-Carlo rollout and therefore expensive;
// it gets queried repeatedly at the same training inputs while one surface
// is alive, so resolved values are cached by exact input bytes. Copies share
// the cache. Recomputation after eviction never happens (nothing evicts),
// and the wrapped function must be deterministic for the cache to be sound.
class PriorMean {
 public:
  using Fn = std::function<double(const Vec&)>;

  PriorMean();  // zero function
  explicit PriorMean(Fn fn);
  static PriorMean zero() { return PriorMean(); }

  double operator()(const Vec& x) const;
  std::size_t cache_size() const;

 private:
  struct State;
  std::shared_ptr<State> state_;
};

struct FitConfig {
  int restarts = 5;
  int max_ascent_iters = 80;
  std::uint64_t seed = 0;   // restart sampling and subsampling
  int max_points = 0;       // 0 = all data, else seeded subsample cap
  std::optional<KernelHyper> warm_start;  // extra start point, normalized space
};

// Fitted Gaussian process. Immutable after construction; prediction is
// const and safe to call concurrently. Inputs are kept raw; the kernel is
// evaluated on per-dimension z-scored coordinates (identity when built via
// with_hyper), and targets are centered by the prior mean only so that the
// prior survives as the far-field posterior mean.
class GpModel {
 public:
  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
  };

  // Prior-only model: predict returns (m(x), k(x,x)).
  GpModel(Eigen::Index input_dim, PriorMean prior, KernelHyper hyper);

  // Construct from data with the given hyperparameters, no normalization,
  // no hyperparameter search. `hyper` is in raw input units.
  static GpModel with_hyper(const Mat& inputs, const Vec& targets,
                            PriorMean prior, const KernelHyper& hyper);

  Prediction predict(const Vec& query) const;

  // Batched prediction, one row of `queries` per point. Identical model
  // state as predict(); used on the rollout hot path.
  void predict_batch(const Mat& queries, Vec& mean, Vec& variance) const;

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index size() const { return inputs_.rows(); }
  const Mat& inputs() const { return inputs_; }
  const Vec& targets() const { return targets_; }
  const KernelHyper& hyper() const { return hyper_; }
  const PriorMean& prior_mean() const { return prior_; }
  double jitter() const { return jitter_; }
  double fitted_lml() const { return fitted_lml_; }

  // Lengthscales mapped back to raw input units (= hyper lengthscale times
  // the per-dimension normalization scale).
  Vec raw_lengthscales() const;

 private:
  friend GpModel fit(const Mat&, const Vec&, const PriorMean&, const FitConfig&);

  GpModel() = default;
  void finalize();  // factor the kernel matrix, precompute alpha

  Eigen::Index input_dim_ = 0;
  Mat inputs_;        // raw, one row per point
  Vec targets_;       // raw observations
  PriorMean prior_;
  KernelHyper hyper_; // in normalized-input units
  Vec norm_shift_;    // per-dim shift applied before the kernel
  Vec norm_scale_;    // per-dim divisor applied before the kernel
  Mat normed_;        // normalized inputs (cached)
  Mat chol_lower_;    // L with L L^T = K + noise I + jitter I
  Vec alpha_;         // (K + noise I + jitter I)^{-1} (f - m)
  double jitter_ = 0.0;
  double fitted_lml_ = 0.0;
};

// Log marginal likelihood of the data under the SE-kernel GP with the given
// prior mean, computed through a Cholesky factorization of
// K + noise I (+ jitter escalated only if the factorization fails).
double log_marginal_likelihood(const Mat& inputs, const Vec& targets,
                               const PriorMean& prior_mean,
                               const KernelHyper& hyper);

// Gradient of the log marginal likelihood with respect to the log
// hyperparameters, ordered [log l_1 .. log l_d, log sf2, log sn2].
Vec lml_gradient(const Mat& inputs, const Vec& targets,
                 const PriorMean& prior_mean, const KernelHyper& hyper);

// Fit hyperparameters by multi-start gradient ascent of the log marginal
// likelihood in log-hyperparameter space, within the standard bound box
// relative to input range and residual variance.
GpModel fit(const Mat& inputs, const Vec& targets, const PriorMean& prior_mean,
            const FitConfig& config = {});

GpModel fit(const std::vector<Vec>& inputs, const std::vector<double>& targets,
            const PriorMean& prior_mean, const FitConfig& config = {});

}  // namespace mbmf::gp
