#include "oraclebo/objectives.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace oraclebo::objectives;
using Eigen::VectorXd;

namespace {

constexpr ObjectiveId kAll[] = {ObjectiveId::P1,     ObjectiveId::P2,        ObjectiveId::P3,
                                ObjectiveId::Branin, ObjectiveId::Hartmann6, ObjectiveId::Rosenbrock};

VectorXd normalized_minimizer(const ObjectiveSpec& s) {
  VectorXd h(s.n_high);
  for (std::size_t j = 0; j < s.n_high; ++j) h[static_cast<Eigen::Index>(j)] = s.to_normalized(j, s.canonical_minimizer[static_cast<Eigen::Index>(j)]);
  return h;
}

}  // namespace

TEST_CASE("Branin reaches its minimum at all three minimizers") {
  const auto spec = make_objective(ObjectiveId::Branin, 2);
  for (const auto& m : kBraninMinimizers) {
    CHECK(std::abs(evaluate_native(spec, VectorXd{{m[0], m[1]}}) - 0.397887) <= 1e-5);
  }
}

TEST_CASE("Hartmann6 minimum") {
  const auto spec = make_objective(ObjectiveId::Hartmann6, 6);
  VectorXd x(6);
  for (int i = 0; i < 6; ++i) x[i] = kHartmann6Minimizer[static_cast<std::size_t>(i)];
  CHECK(std::abs(evaluate_native(spec, x) - (-3.32237)) <= 1e-4);
}

TEST_CASE("Rosenbrock and the staircase objectives vanish at their minimizers") {
  CHECK(evaluate_native(make_objective(ObjectiveId::Rosenbrock, 8), VectorXd::Ones(8)) == 0.0);
  for (auto id : {ObjectiveId::P1, ObjectiveId::P2, ObjectiveId::P3}) {
    CHECK(evaluate(make_objective(id, 25), VectorXd::Zero(25)) == 0.0);
  }
}

TEST_CASE("P2 at 1.5 in ten dimensions") {
  CHECK(evaluate_native(make_objective(ObjectiveId::P2, 10), VectorXd::Constant(10, 1.5)) == 10.0);
}

TEST_CASE("direct formula checks") {
  const auto p1 = make_objective(ObjectiveId::P1, 3);
  CHECK(evaluate_native(p1, VectorXd{{2.7, -0.4, -3.6}}) == 9.0 + 0.0 + 9.0);
  const auto p3 = make_objective(ObjectiveId::P3, 2);
  CHECK(evaluate_native(p3, VectorXd{{1.5, -2.1}}) == 2.0 + 4.0);
  const auto rb = make_objective(ObjectiveId::Rosenbrock, 2);
  CHECK(evaluate_native(rb, VectorXd{{0.0, 0.0}}) == 1.0);
  const auto br = make_objective(ObjectiveId::Branin, 2);
  const double b = 5.1 / (4 * std::numbers::pi * std::numbers::pi), c = 5 / std::numbers::pi;
  const double u = 3.0 - b * 1.0 + c - 6.0;
  CHECK(evaluate_native(br, VectorXd{{1.0, 3.0}}) == doctest::Approx(u * u + 10 * (1 - 1 / (8 * std::numbers::pi)) * std::cos(1.0) + 10));
}

TEST_CASE("every objective attains its known minimum at the canonical minimizer") {
  for (auto id : kAll) {
    const auto spec = make_objective(id, 12);
    CHECK(std::abs(evaluate_native(spec, spec.canonical_minimizer) - spec.known_minimum) <= 1e-6);
    CHECK(std::abs(evaluate(spec, normalized_minimizer(spec)) - spec.known_minimum) <= 1e-6);
    CHECK((spec.lower.array() < spec.upper.array()).all());
  }
}

TEST_CASE("no random point undercuts the known minimum") {
  for (auto id : kAll) {
    const auto spec = make_objective(id, 8);
    oraclebo::CounterRng rng(static_cast<std::uint64_t>(id) + 1);
    double lowest = INFINITY;
    VectorXd h(8);
    for (int i = 0; i < 100000; ++i) {
      for (Eigen::Index j = 0; j < 8; ++j) h[j] = rng.uniform(-1, 1);
      lowest = std::min(lowest, evaluate(spec, h));
    }
    CHECK(lowest >= spec.known_minimum - 1e-9);
  }
}

TEST_CASE("staircase objectives are flat under tiny perturbations") {
  auto term = [](ObjectiveId id, double x) {
    if (id == ObjectiveId::P1) return std::floor(std::abs(x + 0.5));
    if (id == ObjectiveId::P2) return std::floor(std::abs(x));
    return std::floor(x * x);
  };
  for (auto id : {ObjectiveId::P1, ObjectiveId::P2, ObjectiveId::P3}) {
    const auto spec = make_objective(id, 6);
    oraclebo::CounterRng rng(31);
    for (int i = 0; i < 100; ++i) {
      VectorXd h(6);
      for (Eigen::Index j = 0; j < 6; ++j) h[j] = rng.uniform(-1, 1);
      const double base = evaluate(spec, h);
      for (Eigen::Index j = 0; j < 6; ++j) {
        VectorXd g = h;
        g[j] += 1e-6;
        const bool crossed = term(id, spec.to_native(h)[j]) != term(id, spec.to_native(g)[j]);
        if (!crossed) CHECK(evaluate(spec, g) == base);
      }
    }
  }
}

TEST_CASE("dimension queries map the canonical minimizer into normalized units") {
  const auto p1 = make_objective(ObjectiveId::P1, 10);
  for (std::size_t j = 0; j < 10; ++j) CHECK(dimension_query(p1, j).value == 0.0);
  const auto br = make_objective(ObjectiveId::Branin, 4);
  CHECK(dimension_query(br, 0).value == doctest::Approx(2.0 * (std::numbers::pi + 5.0) / 15.0 - 1.0));
  CHECK(dimension_query(br, 0).value == doctest::Approx(0.08554).epsilon(1e-4));
  const auto rb = make_objective(ObjectiveId::Rosenbrock, 6);
  for (std::size_t j = 0; j < 6; ++j) CHECK(dimension_query(rb, j).value == doctest::Approx(-0.2));
  CHECK(dimension_query(rb, 3).index == 3);
  CHECK_THROWS_AS(dimension_query(rb, 6), std::out_of_range);
}

TEST_CASE("regret") {
  const auto br = make_objective(ObjectiveId::Branin, 2);
  CHECK(regret(br, kBraninMinimum) == 0.0);
  CHECK(regret(br, 1.0) == doctest::Approx(0.602113));
  CHECK(regret(make_objective(ObjectiveId::P1, 500), 83.0) == 83.0);
  CHECK_THROWS_AS(regret(br, 0.3), std::logic_error);
}

TEST_CASE("active sets and dummy coordinates") {
  const auto spec = make_objective(ObjectiveId::P1, 10, {1, 4, 7, 9});
  VectorXd h = VectorXd::Constant(10, 0.9);
  h[1] = h[4] = h[7] = h[9] = 0.0;
  CHECK(evaluate(spec, h) == 0.0);
  CHECK(make_objective(ObjectiveId::Rosenbrock, 20).active.size() == 4);
  CHECK(make_objective(ObjectiveId::P2, 20).active.size() == 20);
  CHECK_THROWS(make_objective(ObjectiveId::Branin, 5, {0, 1, 2}));
  CHECK_THROWS(make_objective(ObjectiveId::P1, 5, {0, 0}));
  CHECK_THROWS(make_objective(ObjectiveId::P1, 5, {5}));
  CHECK_THROWS(evaluate(spec, VectorXd::Zero(3)));
}

TEST_CASE("objective names round-trip") {
  for (auto id : kAll) CHECK(parse_objective_id(to_string(id)) == id);
  CHECK(parse_objective_id("hartmann") == ObjectiveId::Hartmann6);
  CHECK_FALSE(parse_objective_id("ackley").has_value());
}

TEST_CASE("handles evaluate the same function") {
  const auto spec = make_objective(ObjectiveId::Hartmann6, 9);
  const auto handle = to_handle(spec);
  const auto oracle = to_oracle(spec);
  const VectorXd h = testing_support::uniform_vector(9, -1, 1, 3);
  CHECK(handle.evaluate(h) == evaluate(spec, h));
  CHECK(handle.dimension == 9);
  CHECK(handle.sweepable);
  CHECK(oracle.query(2).value == dimension_query(spec, 2).value);
}
