#include "oraclebo/embedding.hpp"

#include "oraclebo/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oraclebo::embedding {

namespace {

Matrix draw_b(Eigen::Index n_high, Eigen::Index n_low, std::uint64_t seed) {
  CounterRng rng(derive_key(seed, static_cast<std::uint64_t>(n_high), static_cast<std::uint64_t>(n_low)));
  Matrix b(n_low, n_high);
  for (Eigen::Index c = 0; c < n_high; ++c) {
    for (Eigen::Index r = 0; r < n_low; ++r) b(r, c) = rng.normal();
    const double norm = b.col(c).norm();
    if (norm > 0.0) b.col(c) /= norm;
  }
  return b;
}

bool finish_spec(EmbeddingSpec& spec) {
  const Matrix gram = spec.matrix_b * spec.matrix_b.transpose();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) return false;
  spec.pseudo_inverse = llt.solve(spec.matrix_b).transpose();
  const double err =
      (spec.matrix_b * spec.pseudo_inverse - Matrix::Identity(spec.n_low, spec.n_low)).cwiseAbs().maxCoeff();
  return err <= 1e-8;
}

}  // namespace

EmbeddingSpec make_embedding(Eigen::Index n_high, Eigen::Index n_low, std::uint64_t seed) {
  if (n_low < 1 || n_low > n_high) throw std::invalid_argument("embedding requires 1 <= n_low <= n_high");
  constexpr int kMaxRegenerations = 16;
  for (int attempt = 0; attempt < kMaxRegenerations; ++attempt) {
    const std::uint64_t used = seed + static_cast<std::uint64_t>(attempt);
    EmbeddingSpec spec;
    spec.n_high = n_high;
    spec.n_low = n_low;
    spec.seed = seed;
    spec.effective_seed = used;
    spec.matrix_b = draw_b(n_high, n_low, used);
    if (finish_spec(spec)) return spec;
  }
  throw std::runtime_error("could not draw a full-rank embedding matrix");
}

EmbeddingSpec restrict_embedding(const EmbeddingSpec& spec, const std::vector<Eigen::Index>& keep) {
  if (keep.size() < static_cast<std::size_t>(spec.n_low)) throw std::invalid_argument("restrict_embedding: too few columns");
  EmbeddingSpec out;
  out.n_high = static_cast<Eigen::Index>(keep.size());
  out.n_low = spec.n_low;
  out.seed = spec.seed;
  out.effective_seed = spec.effective_seed;
  out.matrix_b.resize(spec.n_low, out.n_high);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= spec.n_high) throw std::invalid_argument("restrict_embedding: column out of range");
    out.matrix_b.col(static_cast<Eigen::Index>(i)) = spec.matrix_b.col(keep[i]);
  }
  if (!finish_spec(out)) throw std::runtime_error("restricted embedding matrix is rank deficient");
  return out;
}

Vector project_up(const EmbeddingSpec& spec, const Vector& y) {
  if (y.size() != spec.n_low) throw std::invalid_argument("project_up: dimension mismatch");
  return spec.pseudo_inverse * y;
}

Vector project_down(const EmbeddingSpec& spec, const Vector& h) {
  if (h.size() != spec.n_high) throw std::invalid_argument("project_down: dimension mismatch");
  return spec.matrix_b * h;
}

bool is_feasible(const EmbeddingSpec& spec, const Vector& y) {
  return project_up(spec, y).cwiseAbs().maxCoeff() <= 1.0 + kFeasibilityTolerance;
}

Matrix sample_polytope(const EmbeddingSpec& spec, Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_polytope: count must be >= 1");
  CounterRng rng(seed);
  const Eigen::Index d = spec.n_low;
  Vector y = Vector::Zero(d);
  Vector h = Vector::Zero(spec.n_high);
  Vector u(d);
  Matrix out(count, d);

  for (Eigen::Index k = 0; k < count; ++k) {
    for (int step = 0; step < kHitAndRunBurnIn; ++step) {
      for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal();
      const double un = u.norm();
      if (un == 0.0) continue;
      u /= un;
      const Vector v = spec.pseudo_inverse * u;
      double t_lo = -std::numeric_limits<double>::infinity();
      double t_hi = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] > 0.0) {
          t_hi = std::min(t_hi, (1.0 - h[i]) / v[i]);
          t_lo = std::max(t_lo, (-1.0 - h[i]) / v[i]);
        } else if (v[i] < 0.0) {
          t_hi = std::min(t_hi, (-1.0 - h[i]) / v[i]);
          t_lo = std::max(t_lo, (1.0 - h[i]) / v[i]);
        }
      }
      if (!std::isfinite(t_lo) || !std::isfinite(t_hi) || t_hi <= t_lo) continue;
      const double t = rng.uniform(t_lo, t_hi);
      y += t * u;
      h += t * v;
    }
    // Re-anchor h to remove accumulated drift, pulling y inside if drift crossed the boundary.
    h = spec.pseudo_inverse * y;
    const double m = h.cwiseAbs().maxCoeff();
    if (m > 1.0) {
      y *= (1.0 - 1e-12) / m;
      h = spec.pseudo_inverse * y;
    }
    out.row(k) = y.transpose();
  }
  return out;
}

}  // namespace oraclebo::embedding
