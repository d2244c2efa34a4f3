#include "mbmf/gp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <unordered_map>

namespace mbmf::gp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Jitter ladder relative to signal variance: none, then 1e-8 escalating
// tenfold to 1e-2, after which factorization counts as failed.
constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-2;

Mat kernel_matrix(const Mat& x, const KernelHyper& h) {
  const Eigen::Index n = x.rows();
  Mat k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = h.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      double q = 0.0;
      for (Eigen::Index d = 0; d < x.cols(); ++d) {
        double r = (x(i, d) - x(j, d)) / h.lengthscales[d];
        q += r * r;
      }
      k(i, j) = k(j, i) = h.signal_variance * std::exp(-0.5 * q);
    }
  }
  return k;
}

struct Factorization {
  bool ok = false;
  Mat lower;
  Vec alpha;
  double jitter = 0.0;
  double lml = 0.0;
};

// Factor K + noise I (+ escalating jitter) and evaluate the log marginal
// likelihood of the residuals. `ok == false` means the whole ladder failed.
Factorization factor_and_lml(const Mat& x, const Vec& residual,
                             const KernelHyper& h) {
  Factorization out;
  const Eigen::Index n = x.rows();
  Mat k = kernel_matrix(x, h);
  k.diagonal().array() += h.noise_variance;

  double rel = 0.0;
  while (true) {
    Mat trial = k;
    trial.diagonal().array() += rel * h.signal_variance;
    Eigen::LLT<Mat> llt(trial);
    if (llt.info() == Eigen::Success) {
      out.lower = llt.matrixL();
      bool clean = out.lower.diagonal().minCoeff() > 0.0 &&
                   out.lower.allFinite();
      if (clean) {
        out.ok = true;
        out.jitter = rel * h.signal_variance;
        out.alpha = llt.solve(residual);
        double quad = residual.dot(out.alpha);
        double logdet = 2.0 * out.lower.diagonal().array().log().sum();
        out.lml = -0.5 * quad - 0.5 * logdet -
                  0.5 * static_cast<double>(n) * std::log(kTwoPi);
        if (std::isfinite(out.lml)) return out;
        out.ok = false;
      }
    }
    rel = (rel == 0.0) ? kJitterStart : rel * 10.0;
    if (rel > kJitterMax) return out;
  }
}

Vec prior_values(const Mat& inputs, const PriorMean& prior) {
  Vec m(inputs.rows());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) m[i] = prior(inputs.row(i));
  return m;
}

Vec gradient_from_factorization(const Mat& x, const KernelHyper& h,
                                const Factorization& f) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Mat kinv = Mat::Identity(n, n);
  f.lower.triangularView<Eigen::Lower>().solveInPlace(kinv);
  f.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(kinv);
  Mat w = f.alpha * f.alpha.transpose() - kinv;

  Mat k = kernel_matrix(x, h);
  Vec grad(d + 2);
  for (Eigen::Index dim = 0; dim < d; ++dim) {
    const double inv_l2 =
        1.0 / (h.lengthscales[dim] * h.lengthscales[dim]);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        double delta = x(i, dim) - x(j, dim);
        acc += w(i, j) * k(i, j) * delta * delta * inv_l2;
      }
    }
    grad[dim] = 0.5 * acc;
  }
  double trace_w = w.trace();
  grad[d] = 0.5 * (w.cwiseProduct(k).sum() + f.jitter * trace_w);
  grad[d + 1] = 0.5 * h.noise_variance * trace_w;
  return grad;
}

struct LogBounds {
  Vec lo;
  Vec hi;
};

Vec clip_to(const Vec& u, const LogBounds& b) {
  return u.cwiseMax(b.lo).cwiseMin(b.hi);
}

KernelHyper hyper_from_log(const Vec& u, Eigen::Index d) {
  KernelHyper h;
  h.lengthscales = u.head(d).array().exp();
  h.signal_variance = std::exp(u[d]);
  h.noise_variance = std::exp(u[d + 1]);
  return h;
}

Vec log_from_hyper(const KernelHyper& h) {
  Vec u(h.lengthscales.size() + 2);
  u.head(h.lengthscales.size()) = h.lengthscales.array().log();
  u[h.lengthscales.size()] = std::log(h.signal_variance);
  u[h.lengthscales.size() + 1] = std::log(std::max(h.noise_variance, 1e-300));
  return u;
}

}  // namespace

void KernelHyper::validate(Eigen::Index input_dim) const {
  if (lengthscales.size() != input_dim)
    throw std::invalid_argument("kernel lengthscale count does not match input dimension");
  if ((lengthscales.array() <= 0.0).any())
    throw std::invalid_argument("lengthscales must be positive");
  if (!(signal_variance > 0.0))
    throw std::invalid_argument("signal variance must be positive");
  if (noise_variance < 0.0)
    throw std::invalid_argument("noise variance must be non-negative");
}

double se_kernel(const Vec& x1, const Vec& x2, const KernelHyper& hyper) {
  if (x1.size() != x2.size())
    throw std::invalid_argument("se_kernel inputs differ in dimension");
  hyper.validate(x1.size());
  double q = ((x1 - x2).array() / hyper.lengthscales.array()).square().sum();
  return hyper.signal_variance * std::exp(-0.5 * q);
}

struct PriorMean::State {
  Fn fn;
  mutable std::unordered_map<std::string, double> cache;
  mutable std::mutex mutex;
};

PriorMean::PriorMean() : PriorMean([](const Vec&) { return 0.0; }) {}

PriorMean::PriorMean(Fn fn) : state_(std::make_shared<State>()) {
  state_->fn = std::move(fn);
}

double PriorMean::operator()(const Vec& x) const {
  std::string key(reinterpret_cast<const char*>(x.data()),
                  static_cast<std::size_t>(x.size()) * sizeof(double));
  {
    std::lock_guard<std::mutex> lock(state_->mutex);
    auto it = state_->cache.find(key);
    if (it != state_->cache.end()) return it->second;
  }
  double value = state_->fn(x);
  std::lock_guard<std::mutex> lock(state_->mutex);
  return state_->cache.emplace(std::move(key), value).first->second;
}

std::size_t PriorMean::cache_size() const {
  std::lock_guard<std::mutex> lock(state_->mutex);
  return state_->cache.size();
}

double log_marginal_likelihood(const Mat& inputs, const Vec& targets,
                               const PriorMean& prior_mean,
                               const KernelHyper& hyper) {
  if (inputs.rows() < 1) throw std::invalid_argument("need at least one data point");
  if (inputs.rows() != targets.size())
    throw std::invalid_argument("inputs/targets size mismatch");
  hyper.validate(inputs.cols());
  Vec residual = targets - prior_values(inputs, prior_mean);
  Factorization f = factor_and_lml(inputs, residual, hyper);
  if (!f.ok)
    throw NumericalError("kernel matrix factorization failed after jitter escalation");
  return f.lml;
}

Vec lml_gradient(const Mat& inputs, const Vec& targets,
                 const PriorMean& prior_mean, const KernelHyper& hyper) {
  hyper.validate(inputs.cols());
  Vec residual = targets - prior_values(inputs, prior_mean);
  Factorization f = factor_and_lml(inputs, residual, hyper);
  if (!f.ok)
    throw NumericalError("kernel matrix factorization failed after jitter escalation");
  return gradient_from_factorization(inputs, hyper, f);
}

GpModel::GpModel(Eigen::Index input_dim, PriorMean prior, KernelHyper hyper)
    : input_dim_(input_dim),
      inputs_(0, input_dim),
      targets_(0),
      prior_(std::move(prior)),
      hyper_(std::move(hyper)) {
  hyper_.validate(input_dim_);
  norm_shift_ = Vec::Zero(input_dim_);
  norm_scale_ = Vec::Ones(input_dim_);
  normed_.resize(0, input_dim_);
}

GpModel GpModel::with_hyper(const Mat& inputs, const Vec& targets,
                            PriorMean prior, const KernelHyper& hyper) {
  if (inputs.rows() != targets.size())
    throw std::invalid_argument("inputs/targets size mismatch");
  hyper.validate(inputs.cols());
  GpModel m;
  m.input_dim_ = inputs.cols();
  m.inputs_ = inputs;
  m.targets_ = targets;
  m.prior_ = std::move(prior);
  m.hyper_ = hyper;
  m.norm_shift_ = Vec::Zero(m.input_dim_);
  m.norm_scale_ = Vec::Ones(m.input_dim_);
  m.finalize();
  return m;
}

void GpModel::finalize() {
  normed_ = inputs_;
  for (Eigen::Index d = 0; d < input_dim_; ++d)
    normed_.col(d) = (inputs_.col(d).array() - norm_shift_[d]) / norm_scale_[d];
  if (inputs_.rows() == 0) return;
  Vec residual = targets_ - prior_values(inputs_, prior_);
  Factorization f = factor_and_lml(normed_, residual, hyper_);
  if (!f.ok)
    throw NumericalError("kernel matrix factorization failed after jitter escalation");
  chol_lower_ = std::move(f.lower);
  alpha_ = std::move(f.alpha);
  jitter_ = f.jitter;
  fitted_lml_ = f.lml;
}

GpModel::Prediction GpModel::predict(const Vec& query) const {
  if (query.size() != input_dim_)
    throw std::invalid_argument("query dimension does not match training inputs");
  Prediction out;
  if (inputs_.rows() == 0) {
    out.mean = prior_(query);
    out.variance = hyper_.signal_variance;
    return out;
  }
  Vec z = (query - norm_shift_).array() / norm_scale_.array();
  const Eigen::Index n = normed_.rows();
  Vec k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double q = ((z - normed_.row(i).transpose()).array() /
                hyper_.lengthscales.array()).square().sum();
    k[i] = hyper_.signal_variance * std::exp(-0.5 * q);
  }
  out.mean = prior_(query) + k.dot(alpha_);
  Vec v = chol_lower_.triangularView<Eigen::Lower>().solve(k);
  out.variance = std::max(0.0, hyper_.signal_variance - v.squaredNorm());
  return out;
}

void GpModel::predict_batch(const Mat& queries, Vec& mean, Vec& variance) const {
  if (queries.cols() != input_dim_)
    throw std::invalid_argument("query dimension does not match training inputs");
  const Eigen::Index nq = queries.rows();
  mean.resize(nq);
  variance.resize(nq);
  if (inputs_.rows() == 0) {
    for (Eigen::Index i = 0; i < nq; ++i) mean[i] = prior_(queries.row(i));
    variance.setConstant(hyper_.signal_variance);
    return;
  }
  // Scaled coordinates so that squared distance is a plain Gram expansion.
  Mat zq(nq, input_dim_);
  for (Eigen::Index d = 0; d < input_dim_; ++d)
    zq.col(d) = ((queries.col(d).array() - norm_shift_[d]) / norm_scale_[d]) /
                hyper_.lengthscales[d];
  Mat zx(normed_.rows(), input_dim_);
  for (Eigen::Index d = 0; d < input_dim_; ++d)
    zx.col(d) = normed_.col(d) / hyper_.lengthscales[d];
  Vec qn = zq.rowwise().squaredNorm();
  Vec xn = zx.rowwise().squaredNorm();
  Mat cross = (-0.5 * (qn.replicate(1, zx.rows()) +
                       xn.transpose().replicate(nq, 1) -
                       2.0 * zq * zx.transpose()))
                  .array()
                  .exp() *
              hyper_.signal_variance;
  for (Eigen::Index i = 0; i < nq; ++i) mean[i] = prior_(queries.row(i));
  mean += cross * alpha_;
  Mat v = chol_lower_.triangularView<Eigen::Lower>().solve(cross.transpose());
  variance = (hyper_.signal_variance - v.colwise().squaredNorm().array())
                 .max(0.0);
}

Vec GpModel::raw_lengthscales() const {
  return hyper_.lengthscales.array() * norm_scale_.array();
}

namespace {

// One projected gradient-ascent run from a start point in log space.
struct AscentResult {
  bool ok = false;
  Vec u;
  double value = -std::numeric_limits<double>::infinity();
};

AscentResult ascend(const Mat& x, const Vec& residual, const Vec& start,
                    const LogBounds& bounds, int max_iters) {
  AscentResult res;
  res.u = clip_to(start, bounds);
  const Eigen::Index d = x.cols();
  auto value_at = [&](const Vec& u, Factorization* f_out) -> double {
    Factorization f = factor_and_lml(x, residual, hyper_from_log(u, d));
    if (!f.ok) return -std::numeric_limits<double>::infinity();
    double lml = f.lml;
    if (f_out) *f_out = std::move(f);
    return lml;
  };

  Factorization f;
  res.value = value_at(res.u, &f);
  if (!std::isfinite(res.value)) return res;
  res.ok = true;

  double step = 1.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec grad = gradient_from_factorization(x, hyper_from_log(res.u, d), f);
    if (!grad.allFinite() || grad.lpNorm<Eigen::Infinity>() < 1e-6) break;
    bool accepted = false;
    while (step >= 1e-12) {
      Vec cand = clip_to(res.u + step * grad, bounds);
      Vec move = cand - res.u;
      if (move.lpNorm<Eigen::Infinity>() < 1e-14) break;
      Factorization fc;
      double cand_value = value_at(cand, &fc);
      if (std::isfinite(cand_value) &&
          cand_value >= res.value + 1e-4 * grad.dot(move)) {
        double gain = cand_value - res.value;
        res.u = cand;
        res.value = cand_value;
        f = std::move(fc);
        step = std::min(step * 2.0, 100.0);
        accepted = true;
        if (gain < 1e-10 * (1.0 + std::abs(res.value))) return res;
        break;
      }
      step /= 3.0;
    }
    if (!accepted) break;
  }
  return res;
}

}  // namespace

GpModel fit(const Mat& inputs, const Vec& targets, const PriorMean& prior_mean,
            const FitConfig& config) {
  if (inputs.rows() < 2) throw std::invalid_argument("fit needs at least two data points");
  if (inputs.rows() != targets.size())
    throw std::invalid_argument("inputs/targets size mismatch");
  if (config.restarts < 1) throw std::invalid_argument("fit needs at least one restart");

  Mat x = inputs;
  Vec y = targets;
  std::mt19937_64 rng(splitmix64(config.seed));
  if (config.max_points > 0 && inputs.rows() > config.max_points) {
    std::vector<Eigen::Index> idx(inputs.rows());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(config.max_points);
    std::sort(idx.begin(), idx.end());
    x.resize(config.max_points, inputs.cols());
    y.resize(config.max_points);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      x.row(i) = inputs.row(idx[i]);
      y[i] = targets[idx[i]];
    }
  }

  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();

  Vec shift(d), scale(d);
  for (Eigen::Index dim = 0; dim < d; ++dim) {
    shift[dim] = x.col(dim).mean();
    double var = (x.col(dim).array() - shift[dim]).square().mean();
    scale[dim] = std::sqrt(var);
    if (!(scale[dim] > 1e-12)) scale[dim] = 1.0;
  }
  Mat z = x;
  for (Eigen::Index dim = 0; dim < d; ++dim)
    z.col(dim) = (x.col(dim).array() - shift[dim]) / scale[dim];

  Vec residual = y - prior_values(x, prior_mean);
  double target_var =
      std::max((residual.array() - residual.mean()).square().mean(), 1e-10);

  LogBounds bounds;
  bounds.lo.resize(d + 2);
  bounds.hi.resize(d + 2);
  Vec range(d);
  for (Eigen::Index dim = 0; dim < d; ++dim) {
    range[dim] = std::max(z.col(dim).maxCoeff() - z.col(dim).minCoeff(), 1e-6);
    bounds.lo[dim] = std::log(1e-3 * range[dim]);
    bounds.hi[dim] = std::log(1e3 * range[dim]);
  }
  bounds.lo[d] = std::log(1e-4 * target_var);
  bounds.hi[d] = std::log(1e4 * target_var);
  bounds.lo[d + 1] = std::log(1e-8 * target_var);
  bounds.hi[d + 1] = std::log(1.0 * target_var);

  // Heuristic centre: per-dimension median absolute difference over a
  // bounded pair sample, residual variance for the signal, 1% for noise.
  Vec heur(d + 2);
  {
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    const int n_pairs = 512;
    std::vector<double> diffs;
    diffs.reserve(n_pairs);
    for (Eigen::Index dim = 0; dim < d; ++dim) {
      diffs.clear();
      for (int p = 0; p < n_pairs; ++p) {
        Eigen::Index a = pick(rng), b = pick(rng);
        if (a == b) continue;
        double v = std::abs(z(a, dim) - z(b, dim));
        if (v > 0) diffs.push_back(v);
      }
      double med = range[dim] / 3.0;
      if (!diffs.empty()) {
        std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2,
                         diffs.end());
        med = diffs[diffs.size() / 2];
      }
      heur[dim] = std::log(med);
    }
    heur[d] = std::log(target_var);
    heur[d + 1] = std::log(0.01 * target_var);
  }
  heur = clip_to(heur, bounds);

  std::vector<Vec> starts;
  if (config.warm_start) {
    config.warm_start->validate(d);
    starts.push_back(clip_to(log_from_hyper(*config.warm_start), bounds));
  }
  starts.push_back(heur);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  while (static_cast<int>(starts.size()) < config.restarts) {
    Vec s = heur;
    for (Eigen::Index i = 0; i < s.size(); ++i)
      s[i] += unit(rng) * std::log(100.0);
    starts.push_back(clip_to(s, bounds));
  }

  AscentResult best;
  for (const Vec& start : starts) {
    AscentResult r = ascend(z, residual, start, bounds, config.max_ascent_iters);
    if (r.ok && r.value > best.value) best = r;
  }
  if (!best.ok)
    throw FitError("all hyperparameter restarts failed to produce a finite likelihood (n=" +
                   std::to_string(n) + ", d=" + std::to_string(d) + ")");

  GpModel m;
  m.input_dim_ = d;
  m.inputs_ = std::move(x);
  m.targets_ = std::move(y);
  m.prior_ = prior_mean;
  m.hyper_ = hyper_from_log(best.u, d);
  m.norm_shift_ = shift;
  m.norm_scale_ = scale;
  m.finalize();
  return m;
}

GpModel fit(const std::vector<Vec>& inputs, const std::vector<double>& targets,
            const PriorMean& prior_mean, const FitConfig& config) {
  if (inputs.empty()) throw std::invalid_argument("fit needs data");
  Mat x(static_cast<Eigen::Index>(inputs.size()), inputs.front().size());
  Vec y(static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != x.cols())
      throw std::invalid_argument("inconsistent input dimensions");
    x.row(static_cast<Eigen::Index>(i)) = inputs[i];
    y[static_cast<Eigen::Index>(i)] = targets[i];
  }
  return fit(x, y, prior_mean, config);
}

}  // namespace mbmf::gp
