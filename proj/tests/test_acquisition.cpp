#include "oraclebo/acquisition.hpp"
#include "oraclebo/objectives.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace oraclebo;
using namespace oraclebo::acquisition;

namespace {

// Trapezoid integration of (best - f)^+ against the normal density.
double ei_quadrature(double mean, double sd, double best) {
  const int n = 200000;
  const double lo = mean - 12.0 * sd, hi = mean + 12.0 * sd;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double f = lo + i * h;
    const double z = (f - mean) / sd;
    const double g = std::max(best - f, 0.0) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
    acc += (i == 0 || i == n) ? 0.5 * g : g;
  }
  return acc * h;
}

gpr::PosteriorModel random_model(std::uint64_t seed, Eigen::Index n = 6, Eigen::Index d = 2) {
  gpr::ObservationSet obs(d);
  const Matrix x = testing_support::uniform_matrix(n, d, -1, 1, seed);
  const Vector y = testing_support::uniform_vector(n, -2, 2, seed + 1000);
  for (Eigen::Index i = 0; i < n; ++i) obs.add(x.row(i).transpose(), y[i]);
  return gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Constant(d, 0.6), 1e-6));
}

}  // namespace

TEST_CASE("closed-form EI examples") {
  CHECK(expected_improvement(1.0, 0.0, 1.0) == 0.0);
  CHECK(expected_improvement(0.0, 0.0, 1.0) == 1.0);
  CHECK(expected_improvement(0.0, 1e-30, 1.0) == 1.0);
  CHECK(expected_improvement(0.0, 1.0, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("closed-form EI agrees with numerical integration") {
  oraclebo::CounterRng rng(77);
  for (int i = 0; i < 40; ++i) {
    const double mean = rng.uniform(-3, 3), sd = rng.uniform(0.05, 3), best = rng.uniform(-3, 3);
    CHECK(expected_improvement(mean, sd * sd, best) == doctest::Approx(ei_quadrature(mean, sd, best)).epsilon(1e-7));
  }
}

TEST_CASE("EI is decreasing in the mean and nondecreasing in the spread") {
  for (double s : {0.1, 0.5, 1.0, 3.0}) {
    double prev = INFINITY;
    for (double mu = -3.0; mu <= 3.0; mu += 0.05) {
      const double ei = expected_improvement(mu, s * s, 0.0);
      CHECK(ei >= 0.0);
      if (ei > 1e-300) CHECK(ei < prev);
      prev = ei;
    }
  }
  for (double mu : {-2.0, -0.5, -0.01}) {
    double prev = -1.0;
    for (double s = 0.0; s <= 4.0; s += 0.05) {
      const double ei = expected_improvement(mu, s * s, 0.0);
      CHECK(ei >= prev);
      prev = ei;
    }
  }
}

TEST_CASE("model EI is nonnegative everywhere") {
  const auto model = random_model(3);
  const Matrix pts = testing_support::uniform_matrix(500, 2, -1.5, 1.5, 4);
  const Vector ei = expected_improvement(model, pts, model.observations().values().minCoeff());
  CHECK(ei.minCoeff() >= 0.0);
  CHECK(expected_improvement(model, Vector(pts.row(0).transpose()), -1.0) == doctest::Approx(
      expected_improvement(model, Matrix(pts.topRows(1)), -1.0)[0]));
}

TEST_CASE("single-member qEI matches closed-form EI within three standard errors") {
  const int n_mc = 10000;
  for (std::uint64_t c = 0; c < 50; ++c) {
    const auto model = random_model(100 + c);
    const Matrix pt = testing_support::uniform_matrix(1, 2, -1, 1, 500 + c);
    // The incumbent sits within two predictive sds of the mean so that improvement is not a rare event.
    const gpr::Prediction p = gpr::predict(model, pt);
    oraclebo::CounterRng rng(900 + c);
    const double best = p.mean[0] + rng.uniform(-2, 2) * std::sqrt(p.variance[0]);
    const double exact = expected_improvement(model, pt, best)[0];
    const double mc = qei_scores(model, pt, best, n_mc, c)[0];
    const Matrix draws = gpr::sample_joint(model, pt, n_mc, c);
    const Eigen::ArrayXd imp = (best - draws.col(0).array()).cwiseMax(0.0);
    const double sd = std::sqrt((imp - imp.mean()).square().sum() / (n_mc - 1));
    CHECK(mc == doctest::Approx(imp.mean()).epsilon(1e-12));
    CHECK(std::abs(mc - exact) <= 3.0 * sd / std::sqrt(double(n_mc)) + 1e-12);
  }
}

TEST_CASE("qEI at a noise-free observed best point is zero") {
  gpr::ObservationSet obs(2);
  obs.add(Vector::Constant(2, 0.1), -1.0);
  obs.add(Vector::Constant(2, 0.7), 2.0);
  const auto model = gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Constant(2, 0.5)));
  Matrix pt(1, 2);
  pt << 0.1, 0.1;
  CHECK(qei_scores(model, pt, -1.0, 1000, 3)[0] <= 1e-6);
}

TEST_CASE("duplicated batch members receive equal scores") {
  const auto model = random_model(8);
  Matrix pts(2, 2);
  pts << 0.3, -0.2, 0.3, -0.2;
  const Vector s = qei_scores(model, pts, 0.0, 4000, 5);
  CHECK(s[0] == doctest::Approx(s[1]).epsilon(1e-9));
  CHECK_THROWS(qei_scores(model, Matrix(0, 2), 0.0, 10, 1));
  CHECK_THROWS(qei_scores(model, pts, 0.0, 0, 1));
}

TEST_CASE("qEI is deterministic given the seed") {
  const auto model = random_model(9);
  const Matrix pts = testing_support::uniform_matrix(5, 2, -1, 1, 1);
  CHECK(qei_scores(model, pts, 0.0, 256, 42) == qei_scores(model, pts, 0.0, 256, 42));
}

TEST_CASE("proposed batches satisfy the candidate-batch contract") {
  const auto spec = embedding::make_embedding(30, 2, 11);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    gpr::ObservationSet obs(2);
    const Matrix start = embedding::sample_polytope(spec, 6, seed);
    for (Eigen::Index i = 0; i < start.rows(); ++i) obs.add(start.row(i).transpose(), start.row(i).squaredNorm());
    const auto model = gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Constant(2, 0.5), 1e-6));
    BatchOptions opt;
    opt.n_raw = 128;
    opt.n_mc = 128;
    const double best = model.observations().values().minCoeff();
    const auto batch = propose_batch(model, spec, best, opt, seed);
    REQUIRE(batch.points_low.rows() == opt.q);
    REQUIRE(batch.points_high.rows() == opt.q);
    REQUIRE(batch.qei.size() == opt.q);
    CHECK(batch.qei.minCoeff() >= 0.0);
    for (Eigen::Index i = 0; i < opt.q; ++i) {
      const Vector y = batch.points_low.row(i).transpose();
      CHECK(embedding::is_feasible(spec, y));
      CHECK(batch.points_high.row(i).transpose() == embedding::project_up(spec, y));
      for (Eigen::Index j = 0; j < i; ++j) CHECK(batch.points_low.row(i) != batch.points_low.row(j));
    }
    const auto again = propose_batch(model, spec, best, opt, seed);
    CHECK(again.points_low == batch.points_low);
    CHECK(again.qei == batch.qei);
  }
}

TEST_CASE("a batch of one is the pool's single-point EI maximizer") {
  const auto spec = embedding::make_embedding(20, 2, 3);
  gpr::ObservationSet obs(2);
  obs.add(Vector::Zero(2), 0.5);
  const auto model = gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Constant(2, 0.4), 1e-6));
  BatchOptions opt;
  opt.q = 1;
  opt.n_raw = 200;
  const auto batch = propose_batch(model, spec, 0.5, opt, 21);
  const Matrix pool = candidate_pool(model, spec, opt.n_raw, 2, opt.perturbation_step, 21);
  const Vector ei = expected_improvement(model, pool, 0.5);
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < ei.size(); ++i)
    if (ei[i] > ei[arg]) arg = i;
  CHECK(batch.points_low.row(0) == pool.row(arg));
}

TEST_CASE("batch proposals reject invalid sizes") {
  const auto spec = embedding::make_embedding(10, 2, 1);
  gpr::ObservationSet obs(2);
  obs.add(Vector::Zero(2), 0.0);
  const auto model = gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Ones(2)));
  BatchOptions opt;
  opt.q = 0;
  CHECK_THROWS_AS(propose_batch(model, spec, 0.0, opt, 1), std::invalid_argument);
  opt.q = 5;
  opt.n_raw = 4;
  CHECK_THROWS_AS(propose_batch(model, spec, 0.0, opt, 1), std::invalid_argument);
}

TEST_CASE("batch on embedded Branin dominates random feasible points") {
  const auto branin = objectives::make_objective(objectives::ObjectiveId::Branin, 10);
  const auto spec = embedding::make_embedding(10, 1, 5);
  gpr::ObservationSet obs(1);
  const Matrix start = embedding::sample_polytope(spec, 5, 1);
  for (Eigen::Index i = 0; i < start.rows(); ++i)
    obs.add(start.row(i).transpose(), objectives::evaluate(branin, embedding::project_up(spec, start.row(i).transpose())));
  const auto model = gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Constant(1, 0.3), 1e-6));
  const double best = model.observations().values().minCoeff();
  BatchOptions opt;
  opt.n_mc = 4096;
  const auto batch = propose_batch(model, spec, best, opt, 2);
  const Matrix random = embedding::sample_polytope(spec, 100, derive_key(2, 99));
  double random_best = 0.0;
  for (Eigen::Index i = 0; i < random.rows(); ++i)
    random_best = std::max(random_best, qei_scores(model, Matrix(random.row(i)), best, opt.n_mc, derive_key(2, 3, 0))[0]);
  CHECK(batch.qei.maxCoeff() >= random_best);
}
