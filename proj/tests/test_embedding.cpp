#include "oraclebo/embedding.hpp"
#include "support.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <map>

using namespace oraclebo::embedding;

TEST_CASE("pseudo-inverse and unit columns across shapes and seeds") {
  for (Eigen::Index n_high : {10, 100, 2000}) {
    for (Eigen::Index d : {2, 4, 10}) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        if (n_high == 2000 && seed >= 3) continue;  // the large case is slow and adds little
        const auto spec = make_embedding(n_high, d, seed);
        CHECK((spec.matrix_b * spec.pseudo_inverse - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK((spec.matrix_b.colwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("paper-scale embedding shape") {
  const auto spec = make_embedding(2000, 4, 1);
  CHECK(spec.matrix_b.rows() == 4);
  CHECK(spec.matrix_b.cols() == 2000);
  CHECK(spec.pseudo_inverse.rows() == 2000);
}

TEST_CASE("square embedding inverts exactly") {
  const auto spec = make_embedding(4, 4, 123);
  CHECK((spec.pseudo_inverse - spec.matrix_b.inverse()).cwiseAbs().maxCoeff() < 1e-8);
  const Vector h = testing_support::uniform_vector(4, -1, 1, 5);
  CHECK((project_up(spec, project_down(spec, h)) - h).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("embedding is deterministic and keyed by the seed") {
  CHECK(make_embedding(10, 2, 7).matrix_b == make_embedding(10, 2, 7).matrix_b);
  CHECK(make_embedding(10, 2, 7).matrix_b != make_embedding(10, 2, 8).matrix_b);
}

TEST_CASE("entries follow the generator contract") {
  const auto spec = make_embedding(6, 3, 9);
  oraclebo::CounterRng rng(oraclebo::derive_key(9, 6, 3));
  Matrix raw(3, 6);
  for (Eigen::Index j = 0; j < 6; ++j)
    for (Eigen::Index i = 0; i < 3; ++i) raw(i, j) = rng.normal();
  for (Eigen::Index j = 0; j < 6; ++j) raw.col(j) /= raw.col(j).norm();
  CHECK(spec.effective_seed == 9);
  CHECK((spec.matrix_b - raw).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS(make_embedding(3, 4, 0));
  CHECK_THROWS(make_embedding(3, 0, 0));
}

TEST_CASE("project_up is linear and zero maps to zero") {
  const auto spec = make_embedding(50, 4, 3);
  CHECK(project_up(spec, Vector::Zero(4)).isZero(0.0));
  const Vector a = testing_support::uniform_vector(4, -1, 1, 1);
  const Vector b = testing_support::uniform_vector(4, -1, 1, 2);
  const Vector lhs = project_up(spec, 2.5 * a - 0.7 * b);
  const Vector rhs = 2.5 * project_up(spec, a) - 0.7 * project_up(spec, b);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("feasibility test") {
  const auto spec = make_embedding(40, 3, 5);
  CHECK(is_feasible(spec, Vector::Zero(3)));
  const Vector dir = testing_support::uniform_vector(3, -1, 1, 8);
  const double scale_to_edge = 1.0 / project_up(spec, dir).cwiseAbs().maxCoeff();
  CHECK_FALSE(is_feasible(spec, 1.01 * scale_to_edge * dir));

  // Bisection on the scale factor lands on the boundary, which is feasible.
  double lo = 0.0, hi = 10.0 * scale_to_edge;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (project_up(spec, mid * dir).cwiseAbs().maxCoeff() <= 1.0 ? lo : hi) = mid;
  }
  CHECK(project_up(spec, lo * dir).cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(is_feasible(spec, lo * dir));
}

TEST_CASE("hit-and-run samples are feasible and reproducible") {
  const auto spec = make_embedding(100, 4, 2);
  const Matrix pts = sample_polytope(spec, 200, 17);
  CHECK(pts.rows() == 200);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    CHECK(is_feasible(spec, pts.row(i).transpose()));
    CHECK(project_up(spec, pts.row(i).transpose()).cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  }
  CHECK(sample_polytope(spec, 5, 17) == sample_polytope(spec, 5, 17));
  CHECK(sample_polytope(spec, 5, 17) != sample_polytope(spec, 5, 18));
  CHECK_THROWS(sample_polytope(spec, 0, 1));
}

TEST_CASE("hit-and-run covers every orthant of a 2-D polytope") {
  const auto spec = make_embedding(10, 2, 4);
  const int n = 10000;
  const Matrix pts = sample_polytope(spec, n, 99);
  std::map<int, int> counts;
  for (Eigen::Index i = 0; i < n; ++i) ++counts[(pts(i, 0) > 0 ? 1 : 0) + (pts(i, 1) > 0 ? 2 : 0)];
  REQUIRE(counts.size() == 4);
  for (const auto& [orthant, c] : counts) CHECK(c >= n / 100);
}

TEST_CASE("restricted embedding keeps columns and recomputes the pseudo-inverse") {
  const auto spec = make_embedding(20, 4, 1);
  const std::vector<Eigen::Index> keep{0, 2, 3, 5, 7, 11, 13, 19};
  const auto sub = restrict_embedding(spec, keep);
  CHECK(sub.n_high == 8);
  for (std::size_t i = 0; i < keep.size(); ++i) CHECK(sub.matrix_b.col(static_cast<Eigen::Index>(i)) == spec.matrix_b.col(keep[i]));
  CHECK((sub.matrix_b * sub.pseudo_inverse - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS(restrict_embedding(spec, {0, 1}));
}
