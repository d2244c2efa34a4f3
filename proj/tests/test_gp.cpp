#include <doctest.h>

#include <cmath>
#include <random>

#include "mbmf/gp.hpp"
#include "oracles.hpp"

using namespace mbmf;

namespace {

gp::KernelHyper hyper_of(const Vec& ls, double sf2, double sn2) {
  gp::KernelHyper h;
  h.lengthscales = ls;
  h.signal_variance = sf2;
  h.noise_variance = sn2;
  return h;
}

Mat random_inputs(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d,
                  double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = u(rng);
  return x;
}

}  // namespace

TEST_SUITE("gp") {

TEST_CASE("se_kernel closed form and symmetry") {
  Vec x0 = Vec::Constant(3, 0.7);
  CHECK(gp::se_kernel(x0, x0, hyper_of(Vec::Ones(3), 2.5, 0.0)) ==
        doctest::Approx(2.5).epsilon(1e-15));

  Vec a(1), b(1);
  a << 0.0;
  b << 1.0;
  CHECK(gp::se_kernel(a, b, hyper_of(Vec::Ones(1), 1.0, 0.0)) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    Mat x = random_inputs(rng, 2, 4);
    auto h = hyper_of((Vec::Ones(4) * 0.7).eval(), 1.3, 0.0);
    CHECK(gp::se_kernel(x.row(0), x.row(1), h) ==
          gp::se_kernel(x.row(1), x.row(0), h));
  }

  CHECK_THROWS_AS(gp::se_kernel(a, Vec::Zero(2), hyper_of(Vec::Ones(1), 1, 0)),
                  std::invalid_argument);
}

TEST_CASE("hyperparameter validation") {
  CHECK_THROWS_AS(hyper_of(Vec::Zero(2), 1.0, 0.0).validate(2),
                  std::invalid_argument);
  CHECK_THROWS_AS(hyper_of(Vec::Ones(2), 0.0, 0.0).validate(2),
                  std::invalid_argument);
  CHECK_THROWS_AS(hyper_of(Vec::Ones(2), 1.0, -1.0).validate(2),
                  std::invalid_argument);
  CHECK_NOTHROW(hyper_of(Vec::Ones(2), 1.0, 0.0).validate(2));
}

TEST_CASE("lml single point closed form") {
  // zero residual and k(x,x) + sn2 = 1 leaves only the -log(2 pi)/2 term
  Mat x(1, 1);
  x << 0.3;
  Vec y(1);
  y << 0.0;
  auto h = hyper_of(Vec::Ones(1), 0.5, 0.5);
  double lml = gp::log_marginal_likelihood(x, y, gp::PriorMean::zero(), h);
  CHECK(lml == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("lml decreases as targets scale away from the prior") {
  std::mt19937_64 rng(11);
  Mat x = random_inputs(rng, 6, 2);
  Vec r = oracles::sample_gp(x, hyper_of(Vec::Ones(2), 1.0, 0.0), 3);
  auto h = hyper_of((Vec::Ones(2) * 0.8).eval(), 1.0, 0.1);
  double prev = gp::log_marginal_likelihood(x, r, gp::PriorMean::zero(), h);
  for (double c : {2.0, 4.0, 8.0}) {
    double cur =
        gp::log_marginal_likelihood(x, (c * r).eval(), gp::PriorMean::zero(), h);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("lml and posterior match the dense-inverse oracle") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index d = 1 + rep % 3;
    Mat x = random_inputs(rng, 5, d);
    Vec ls(d);
    for (Eigen::Index k = 0; k < d; ++k) ls[k] = u(rng);
    auto h = hyper_of(ls, u(rng), 0.05 * u(rng));
    Vec y = oracles::sample_gp(x, h, 100 + rep);
    gp::PriorMean prior([](const Vec& v) { return 0.3 * v[0]; });

    double lml = gp::log_marginal_likelihood(x, y, prior, h);
    gp::GpModel model = gp::GpModel::with_hyper(x, y, prior, h);
    Vec q = random_inputs(rng, 1, d).row(0);
    auto p = model.predict(q);
    auto ref = oracles::dense_gp(x, y, prior, h, q);

    CHECK(lml == doctest::Approx(ref.lml).epsilon(1e-8));
    CHECK(p.mean == doctest::Approx(ref.mean).epsilon(1e-8));
    CHECK(std::abs(p.variance - std::max(ref.variance, 0.0)) < 1e-8);
  }
}

TEST_CASE("analytic lml gradient matches central finite differences") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::Index d = 2;
    Mat x = random_inputs(rng, 8, d);
    auto h_true = hyper_of((Vec::Ones(d) * 0.9).eval(), 1.2, 0.0);
    Vec y = oracles::sample_gp(x, h_true, 200 + rep);
    auto h = hyper_of((Vec::Ones(d) * 0.7).eval(), 0.8, 0.05);
    gp::PriorMean prior = gp::PriorMean::zero();

    Vec grad = gp::lml_gradient(x, y, prior, h);
    Vec u0(d + 2);
    u0 << h.lengthscales.array().log().matrix(), std::log(h.signal_variance),
        std::log(h.noise_variance);
    const double step = 1e-5;
    for (Eigen::Index k = 0; k < d + 2; ++k) {
      auto eval = [&](double delta) {
        Vec u = u0;
        u[k] += delta;
        auto hh = hyper_of(u.head(d).array().exp().matrix().eval(),
                           std::exp(u[d]), std::exp(u[d + 1]));
        return gp::log_marginal_likelihood(x, y, prior, hh);
      };
      double fd = (eval(step) - eval(-step)) / (2.0 * step);
      CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("prior-only model predicts (m, k(q,q))") {
  gp::PriorMean prior([](const Vec& v) { return v.sum() + 1.0; });
  gp::GpModel model(3, prior, hyper_of(Vec::Ones(3), 1.7, 0.0));
  Vec q(3);
  q << 0.1, -0.2, 0.3;
  auto p = model.predict(q);
  CHECK(p.mean == doctest::Approx(q.sum() + 1.0));
  CHECK(p.variance == doctest::Approx(1.7));
}

TEST_CASE("noise-free interpolation at training inputs") {
  std::mt19937_64 rng(9);
  Mat x = random_inputs(rng, 8, 2);
  auto h = hyper_of(Vec::Ones(2), 1.0, 0.0);
  Vec y = oracles::sample_gp(x, h, 17);
  gp::GpModel model = gp::GpModel::with_hyper(x, y, gp::PriorMean::zero(), h);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto p = model.predict(x.row(i));
    CHECK(p.mean == doctest::Approx(y[i]).epsilon(1e-6));
  }
}

TEST_CASE("variance bounds and purity") {
  std::mt19937_64 rng(13);
  Mat x = random_inputs(rng, 10, 2);
  auto h = hyper_of((Vec::Ones(2) * 0.6).eval(), 2.0, 0.01);
  Vec y = oracles::sample_gp(x, h, 23);
  gp::GpModel model = gp::GpModel::with_hyper(x, y, gp::PriorMean::zero(), h);
  for (int rep = 0; rep < 50; ++rep) {
    Vec q = random_inputs(rng, 1, 2).row(0);
    auto a = model.predict(q);
    auto b = model.predict(q);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(a.variance >= 0.0);
    CHECK(a.variance <= gp::se_kernel(q, q, h) + 1e-9);
  }
}

TEST_CASE("batch prediction equals scalar prediction") {
  std::mt19937_64 rng(29);
  Mat x = random_inputs(rng, 12, 3);
  auto h = hyper_of((Vec::Ones(3) * 0.8).eval(), 1.5, 0.02);
  Vec y = oracles::sample_gp(x, h, 31);
  gp::GpModel model = gp::GpModel::with_hyper(x, y, gp::PriorMean::zero(), h);
  Mat q = random_inputs(rng, 20, 3);
  Vec mean, var;
  model.predict_batch(q, mean, var);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    auto p = model.predict(q.row(i));
    CHECK(mean[i] == doctest::Approx(p.mean).epsilon(1e-10));
    CHECK(var[i] == doctest::Approx(p.variance).epsilon(1e-8));
  }
}

TEST_CASE("shifting targets and prior by a constant shifts the mean only") {
  std::mt19937_64 rng(37);
  Mat x = random_inputs(rng, 9, 2);
  auto h = hyper_of(Vec::Ones(2), 1.0, 0.05);
  Vec y = oracles::sample_gp(x, h, 41);
  const double c = 12.5;
  gp::GpModel base = gp::GpModel::with_hyper(x, y, gp::PriorMean::zero(), h);
  gp::GpModel shifted = gp::GpModel::with_hyper(
      x, (y.array() + c).matrix(), gp::PriorMean([](const Vec&) { return 12.5; }),
      h);
  for (int rep = 0; rep < 10; ++rep) {
    Vec q = random_inputs(rng, 1, 2).row(0);
    auto a = base.predict(q);
    auto b = shifted.predict(q);
    CHECK(b.mean - a.mean == doctest::Approx(c).epsilon(1e-10));
    CHECK(b.variance == doctest::Approx(a.variance).epsilon(1e-12));
  }
}

TEST_CASE("fit: zero-residual targets track the prior") {
  std::mt19937_64 rng(43);
  Mat x = random_inputs(rng, 12, 2);
  gp::PriorMean prior([](const Vec& v) { return 2.0 * v[0] - v[1]; });
  Vec y(12);
  for (Eigen::Index i = 0; i < 12; ++i) y[i] = prior(x.row(i));
  gp::FitConfig cfg;
  cfg.seed = 1;
  gp::GpModel model = gp::fit(x, y, prior, cfg);
  for (int rep = 0; rep < 5; ++rep) {
    Vec q = random_inputs(rng, 1, 2).row(0);
    auto p = model.predict(q);
    CHECK(p.mean == doctest::Approx(prior(q)).epsilon(1e-3));
  }
}

TEST_CASE("fit recovers a known lengthscale in most seeds") {
  int hits = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    Mat x = random_inputs(rng, 50, 1, 2.5);
    auto h_true = hyper_of((Vec::Ones(1) * 0.5).eval(), 1.0, 0.0);
    Vec f = oracles::sample_gp(x, h_true, 5000 + seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    Vec y = f;
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise(rng);
    gp::FitConfig cfg;
    cfg.seed = seed;
    gp::GpModel model = gp::fit(x, y, gp::PriorMean::zero(), cfg);
    double ls = model.raw_lengthscales()[0];
    if (ls >= 0.25 && ls <= 1.0) ++hits;
  }
  CHECK(hits >= 16);  // >= 80% of 20 repetitions
}

TEST_CASE("fit result is at least as good as a supplied start point") {
  std::mt19937_64 rng(53);
  Mat x = random_inputs(rng, 20, 2);
  Vec y = oracles::sample_gp(x, hyper_of((Vec::Ones(2) * 0.7).eval(), 1.0, 0.0),
                             61);
  // evaluate the warm start on the same normalized coordinates fit uses
  Vec shift(2), scale(2);
  Mat z = x;
  for (Eigen::Index d = 0; d < 2; ++d) {
    shift[d] = x.col(d).mean();
    scale[d] = std::sqrt((x.col(d).array() - shift[d]).square().mean());
    z.col(d) = (x.col(d).array() - shift[d]) / scale[d];
  }
  auto warm = hyper_of(Vec::Ones(2), 0.5, 0.01);
  double warm_lml = gp::log_marginal_likelihood(z, y, gp::PriorMean::zero(), warm);
  gp::FitConfig cfg;
  cfg.seed = 3;
  cfg.warm_start = warm;
  gp::GpModel model = gp::fit(x, y, gp::PriorMean::zero(), cfg);
  CHECK(model.fitted_lml() >= warm_lml - 1e-9);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  std::mt19937_64 rng(59);
  Mat x = random_inputs(rng, 15, 2);
  Vec y = oracles::sample_gp(x, hyper_of(Vec::Ones(2), 1.0, 0.0), 67);
  gp::FitConfig cfg;
  cfg.seed = 17;
  gp::GpModel a = gp::fit(x, y, gp::PriorMean::zero(), cfg);
  gp::GpModel b = gp::fit(x, y, gp::PriorMean::zero(), cfg);
  CHECK(a.hyper().lengthscales == b.hyper().lengthscales);
  CHECK(a.hyper().signal_variance == b.hyper().signal_variance);
  CHECK(a.hyper().noise_variance == b.hyper().noise_variance);
}

TEST_CASE("fit subsampling caps the training set") {
  std::mt19937_64 rng(61);
  Mat x = random_inputs(rng, 50, 1);
  Vec y = oracles::sample_gp(x, hyper_of((Vec::Ones(1) * 0.8).eval(), 1.0, 0.0),
                             71);
  gp::FitConfig cfg;
  cfg.seed = 2;
  cfg.max_points = 10;
  gp::GpModel model = gp::fit(x, y, gp::PriorMean::zero(), cfg);
  CHECK(model.size() == 10);
}

TEST_CASE("posterior stays within the noise band at training inputs") {
  int violations = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(300 + seed);
    Mat x = random_inputs(rng, 25, 1);
    auto h = hyper_of((Vec::Ones(1) * 0.6).eval(), 1.0, 0.0);
    Vec f = oracles::sample_gp(x, h, 400 + seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    Vec y = f;
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise(rng);
    gp::FitConfig cfg;
    cfg.seed = seed;
    gp::GpModel model = gp::fit(x, y, gp::PriorMean::zero(), cfg);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      auto p = model.predict(x.row(i));
      double band =
          5.0 * std::sqrt(p.variance + model.hyper().noise_variance);
      if (std::abs(p.mean - y[i]) > band) ++violations;
    }
  }
  CHECK(violations <= 5);  // 500 point checks across 20 seeds
}

TEST_CASE("prior mean cache memoizes by input bytes") {
  int calls = 0;
  gp::PriorMean prior([&calls](const Vec& v) {
    ++calls;
    return v.squaredNorm();
  });
  Vec q(2);
  q << 1.0, 2.0;
  double a = prior(q);
  double b = prior(q);
  CHECK(a == b);
  CHECK(calls == 1);
  CHECK(prior.cache_size() == 1);
  gp::PriorMean copy = prior;  // copies share the cache
  CHECK(copy(q) == a);
  CHECK(calls == 1);
  Vec q2(2);
  q2 << 2.0, 1.0;
  copy(q2);
  CHECK(calls == 2);
  CHECK(prior.cache_size() == 2);
}

TEST_CASE("argument and size errors") {
  Mat x(3, 2);
  x << 0, 0, 1, 0, 0, 1;
  Vec y(3);
  y << 1, 2, 3;
  auto h = hyper_of(Vec::Ones(2), 1.0, 0.1);
  gp::GpModel model = gp::GpModel::with_hyper(x, y, gp::PriorMean::zero(), h);
  CHECK_THROWS_AS(model.predict(Vec::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(gp::fit(x.topRows(1), y.head(1), gp::PriorMean::zero()),
                  std::invalid_argument);
  CHECK_THROWS_AS(gp::log_marginal_likelihood(x, y.head(2),
                                              gp::PriorMean::zero(), h),
                  std::invalid_argument);
}

}  // TEST_SUITE
