#pragma once

#include "oraclebo/embedding.hpp"
#include "oraclebo/gpr.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

namespace oraclebo::acquisition {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// E[(best_f - F)^+] for F ~ N(mean, variance), minimization convention.
template <typename Scalar>
Scalar expected_improvement(Scalar mean, Scalar variance, Scalar best_f) {
  using std::max;
  using std::sqrt;
  const Scalar s = sqrt(max(variance, Scalar(0)));
  const Scalar gap = best_f - mean;
  if (s <= Scalar(1e-12)) return max(gap, Scalar(0));
  const Scalar z = gap / s;
  return max(gap * Scalar(normal_cdf(z)) + s * Scalar(normal_pdf(z)), Scalar(0));
}

double expected_improvement(const gpr::PosteriorModel& model, const Vector& y, double best_f);

/// Closed-form EI at every row of `points`.
Vector expected_improvement(const gpr::PosteriorModel& model, const Matrix& points, double best_f);

/// Per-member improvement of a jointly sampled batch: score_i = mean_s (best_f - F_s,i)^+.
Vector qei_scores(const gpr::PosteriorModel& model, const Matrix& batch, double best_f, int n_mc, std::uint64_t seed);

enum class SetScore { Max, Sum };

struct BatchOptions {
  int q = 5;
  int n_raw = 512;
  int n_mc = 256;
  /// Euclidean length of the local perturbations around the incumbent, in embedding coordinates.
  double perturbation_step = 0.05;
  SetScore set_score = SetScore::Max;
};

struct CandidateBatch {
  Matrix points_low;   // q x d
  Matrix points_high;  // q x N, row i = project_up(points_low row i)
  Vector qei;          // q
};

/// Candidate pool: n_raw hit-and-run samples plus 2q feasible perturbations of the incumbent.
Matrix candidate_pool(const gpr::PosteriorModel& model, const embedding::EmbeddingSpec& spec, int n_raw, int n_local,
                      double step, std::uint64_t seed);

/// Ranks the pool by single-point EI, groups consecutive ranks into q sets of q points, scores each set
/// by the max (or sum) of its joint qEI scores and returns the winner.
CandidateBatch propose_batch(const gpr::PosteriorModel& model, const embedding::EmbeddingSpec& spec, double best_f,
                             const BatchOptions& options, std::uint64_t seed);

/// Single-point EI maximization over the same kind of candidate pool.
Vector propose_single(const gpr::PosteriorModel& model, const embedding::EmbeddingSpec& spec, double best_f,
                      int n_raw, double perturbation_step, std::uint64_t seed);

}  // namespace oraclebo::acquisition
