#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oraclebo::gpr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a covariance matrix cannot be factored even after jitter escalation.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::vector<double> attempted_jitter)
      : std::runtime_error(what), attempted_jitter_(std::move(attempted_jitter)) {}

  const std::vector<double>& attempted_jitter() const noexcept { return attempted_jitter_; }

 private:
  std::vector<double> attempted_jitter_;
};

enum class KernelVariant { Ard, Mahalanobis };

/// Squared-exponential kernel parameters.
///
/// ARD:         a0 * exp(-1/2 (y - y')^T diag(l)^-2 (y - y'))
/// Mahalanobis: a0 * exp(-(y - y')^T Gamma (y - y'))
///
/// `lengthscales` is only meaningful for ARD, `mahalanobis` only for the Mahalanobis variant.
struct KernelParams {
  double amplitude = 1.0;
  Vector lengthscales;
  KernelVariant variant = KernelVariant::Ard;
  Matrix mahalanobis;
  double noise_variance = 0.0;

  static KernelParams ard(double amplitude, Vector lengthscales, double noise_variance = 0.0);
  static KernelParams mahalanobis_kernel(double amplitude, Matrix gamma, double noise_variance = 0.0);

  Eigen::Index dimension() const noexcept {
    return variant == KernelVariant::Ard ? lengthscales.size() : mahalanobis.rows();
  }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

namespace detail {
[[noreturn]] void throw_dimension_mismatch(Eigen::Index expected, Eigen::Index got_a, Eigen::Index got_b);
}

template <typename DerivedA, typename DerivedB>
double kernel_eval(const KernelParams& k, const Eigen::MatrixBase<DerivedA>& a,
                   const Eigen::MatrixBase<DerivedB>& b) {
  const Eigen::Index dim = k.dimension();
  if (a.size() != dim || b.size() != dim) detail::throw_dimension_mismatch(dim, a.size(), b.size());
  const Vector diff = a - b;
  if (k.variant == KernelVariant::Ard) {
    const double q = diff.cwiseQuotient(k.lengthscales).squaredNorm();
    return k.amplitude * std::exp(-0.5 * q);
  }
  const double q = diff.dot(k.mahalanobis * diff);
  return k.amplitude * std::exp(-q);
}

/// Cross-covariance between the rows of `a` and the rows of `b` (no noise term).
Matrix cross_covariance(const KernelParams& k, const Matrix& a, const Matrix& b);

/// Training data in embedding space. Points are stored one per row; inserting a point within
/// 1e-12 (max-norm) of an existing one merges it by averaging the values.
class ObservationSet {
 public:
  explicit ObservationSet(Eigen::Index dim = 0) : points_(0, dim) {}

  void add(const Vector& point, double value);

  Eigen::Index size() const noexcept { return values_.size(); }
  Eigen::Index dim() const noexcept { return points_.cols(); }
  bool empty() const noexcept { return values_.size() == 0; }
  const Matrix& points() const noexcept { return points_; }
  const Vector& values() const noexcept { return values_; }

  /// Index of the smallest value; ties go to the earliest observation.
  Eigen::Index argmin() const;

 private:
  Matrix points_;
  Vector values_;
  std::vector<int> multiplicity_;
};

struct PosteriorOptions {
  /// Fit on standardized values (zero mean, unit variance); predictions are mapped back.
  bool standardize = true;
};

struct Prediction {
  Vector mean;
  Vector variance;
};

struct JointPrediction {
  Vector mean;
  Matrix covariance;
};

/// Immutable GP posterior.
class PosteriorModel {
 public:
  const ObservationSet& observations() const noexcept { return obs_; }
  const KernelParams& kernel() const noexcept { return kernel_; }
  /// Lower-triangular factor of K + (noise + jitter) I over standardized values.
  const Matrix& chol_factor() const noexcept { return chol_; }
  const Vector& alpha() const noexcept { return alpha_; }
  double value_offset() const noexcept { return offset_; }
  double value_scale() const noexcept { return scale_; }
  /// Extra diagonal added beyond kernel().noise_variance to make the factorization succeed.
  double applied_jitter() const noexcept { return jitter_; }

 private:
  friend PosteriorModel fit_posterior(ObservationSet, KernelParams, PosteriorOptions);

  ObservationSet obs_;
  KernelParams kernel_;
  Matrix chol_;
  Vector alpha_;
  double offset_ = 0.0;
  double scale_ = 1.0;
  double jitter_ = 0.0;
};

/// Jitter levels tried, in order, when K + noise I is not numerically positive definite.
inline constexpr double kJitterLadder[] = {1e-10, 1e-8, 1e-6, 1e-4};

PosteriorModel fit_posterior(ObservationSet obs, KernelParams kernel, PosteriorOptions options = {});

/// Posterior mean and latent-function variance at each row of `points`.
Prediction predict(const PosteriorModel& model, const Matrix& points);

/// Zero-mean prior: (0, a0).
inline std::pair<double, double> prior_predict(const KernelParams& kernel) { return {0.0, kernel.amplitude}; }

JointPrediction predict_joint(const PosteriorModel& model, const Matrix& points);

/// Exact joint draws at the rows of `points`: returns n_samples x q, one draw per row.
Matrix sample_joint(const PosteriorModel& model, const Matrix& points, int n_samples, std::uint64_t seed);

/// Log marginal likelihood of the (optionally standardized) values under `kernel`.
/// Returns -infinity when the covariance cannot be factored.
double log_marginal_likelihood(const ObservationSet& obs, const KernelParams& kernel, bool standardize = true);

struct MleOptions {
  /// Coordinate sweeps per restart.
  int max_sweeps = 100;
  int line_search_iterations = 20;
  double noise_variance = 0.0;
  bool standardize = true;
  /// Starting point for the first restart; defaults to a0 = 1, l = 0.5 (Gamma = 2 I).
  std::optional<KernelParams> initial;
  /// Typical input distance; random restarts draw lengthscales around it.
  double lengthscale_hint = 1.0;
};

struct MleFit {
  KernelParams params;
  double log_likelihood = -INFINITY;
  /// Set when no restart improved on its initial point.
  bool warning = false;
};

/// Maximum-likelihood kernel fit by coordinate-wise golden-section search in log-parameter space.
/// restarts = 0 evaluates the initial point only. Restarts after the first start from seeded random
/// points.
MleFit fit_kernel_mle(const ObservationSet& obs, KernelVariant variant, int restarts, std::uint64_t seed,
                      const MleOptions& options = {});

}  // namespace oraclebo::gpr
