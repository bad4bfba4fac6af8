#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace oraclebo::embedding {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Random linear embedding R^N -> R^d with its pseudo-inverse.
///
/// The feasible low-dimensional region is the polytope {y : -1 <= pinv * y <= 1}.
struct EmbeddingSpec {
  Eigen::Index n_high = 0;
  Eigen::Index n_low = 0;
  Matrix matrix_b;        // d x N, unit-norm columns
  Matrix pseudo_inverse;  // N x d, B^T (B B^T)^-1
  std::uint64_t seed = 0;
  /// Seed actually used; differs from `seed` only if a rank-deficient draw was regenerated.
  std::uint64_t effective_seed = 0;
};

/// B entries are standard normals from CounterRng(derive_key(seed, n_high, n_low)), filled column by
/// column, then each column is scaled to unit length.
EmbeddingSpec make_embedding(Eigen::Index n_high, Eigen::Index n_low, std::uint64_t seed);

/// The same embedding restricted to the listed coordinates: B keeps only those columns and the
/// pseudo-inverse is recomputed. Throws std::runtime_error if the restricted B is rank deficient.
EmbeddingSpec restrict_embedding(const EmbeddingSpec& spec, const std::vector<Eigen::Index>& keep);

/// B^dagger y, without clipping.
Vector project_up(const EmbeddingSpec& spec, const Vector& y);

/// B h.
Vector project_down(const EmbeddingSpec& spec, const Vector& h);

inline constexpr double kFeasibilityTolerance = 1e-12;

bool is_feasible(const EmbeddingSpec& spec, const Vector& y);

/// `count` feasible points (one per row) from a single hit-and-run chain started at 0, emitting a point
/// every `kHitAndRunBurnIn` steps.
Matrix sample_polytope(const EmbeddingSpec& spec, Eigen::Index count, std::uint64_t seed);

inline constexpr int kHitAndRunBurnIn = 50;

}  // namespace oraclebo::embedding
