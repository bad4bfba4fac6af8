#include "oraclebo/gpr.hpp"

#include "oraclebo/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace oraclebo::gpr {

namespace detail {
void throw_dimension_mismatch(Eigen::Index expected, Eigen::Index got_a, Eigen::Index got_b) {
  std::ostringstream msg;
  msg << "kernel dimension " << expected << " does not match inputs of size " << got_a << " and " << got_b;
  throw std::invalid_argument(msg.str());
}
}  // namespace detail

KernelParams KernelParams::ard(double amplitude, Vector lengthscales, double noise_variance) {
  KernelParams k;
  k.amplitude = amplitude;
  k.lengthscales = std::move(lengthscales);
  k.variant = KernelVariant::Ard;
  k.noise_variance = noise_variance;
  return k;
}

KernelParams KernelParams::mahalanobis_kernel(double amplitude, Matrix gamma, double noise_variance) {
  KernelParams k;
  k.amplitude = amplitude;
  k.variant = KernelVariant::Mahalanobis;
  k.mahalanobis = std::move(gamma);
  k.noise_variance = noise_variance;
  return k;
}

void KernelParams::validate() const {
  if (!(amplitude > 0.0)) throw std::invalid_argument("kernel amplitude must be positive");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be nonnegative");
  if (variant == KernelVariant::Ard) {
    if (lengthscales.size() == 0) throw std::invalid_argument("ARD kernel needs at least one lengthscale");
    if (!(lengthscales.array() > 0.0).all()) throw std::invalid_argument("lengthscales must be positive");
    return;
  }
  if (mahalanobis.rows() == 0 || mahalanobis.rows() != mahalanobis.cols())
    throw std::invalid_argument("Mahalanobis matrix must be square and nonempty");
  if ((mahalanobis - mahalanobis.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("Mahalanobis matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(mahalanobis, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().array() > 0.0).all())
    throw std::invalid_argument("Mahalanobis matrix must be positive definite");
}

namespace {

// Rows mapped so that the kernel exponent is -factor * |z_i - z_j|^2.
struct Transformed {
  Matrix z;
  double factor;
};

Transformed transform_inputs(const KernelParams& k, const Matrix& x) {
  if (k.variant == KernelVariant::Ard) {
    return {x * k.lengthscales.cwiseInverse().asDiagonal(), 0.5};
  }
  Eigen::LLT<Matrix> llt(k.mahalanobis);
  if (llt.info() != Eigen::Success) {
    // Semidefinite Gamma: fall back to a symmetric square root.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(k.mahalanobis);
    const Matrix root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    return {x * root, 1.0};
  }
  return {x * Matrix(llt.matrixL()), 1.0};
}

Matrix covariance_from(const Transformed& a, const Transformed& b, double amplitude) {
  Matrix out(a.z.rows(), b.z.rows());
  for (Eigen::Index j = 0; j < b.z.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.z.rows(); ++i) {
      out(i, j) = amplitude * std::exp(-a.factor * (a.z.row(i) - b.z.row(j)).squaredNorm());
    }
  }
  return out;
}

struct Factorization {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
  bool ok = false;
  std::vector<double> attempted;
};

Factorization factor_with_jitter(const Matrix& gram, double noise) {
  Factorization f;
  const Eigen::Index n = gram.rows();
  auto attempt = [&](double extra) {
    Matrix m = gram;
    m.diagonal().array() += noise + extra;
    f.llt.compute(m);
    f.attempted.push_back(noise + extra);
    return f.llt.info() == Eigen::Success && (f.llt.matrixLLT().diagonal().array() > 0.0).all();
  };
  if (n == 0) return f;
  if (attempt(0.0)) {
    f.ok = true;
    return f;
  }
  for (double jitter : kJitterLadder) {
    if (attempt(jitter)) {
      f.ok = true;
      f.jitter = jitter;
      return f;
    }
  }
  return f;
}

std::pair<double, double> standardization(const Vector& values, bool standardize) {
  if (!standardize || values.size() == 0) return {0.0, 1.0};
  const double mean = values.mean();
  const double var = (values.array() - mean).square().mean();
  const double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}

void check_points(const KernelParams& k, const Matrix& points) {
  if (points.cols() != k.dimension()) detail::throw_dimension_mismatch(k.dimension(), points.cols(), points.cols());
}

}  // namespace

Matrix cross_covariance(const KernelParams& k, const Matrix& a, const Matrix& b) {
  check_points(k, a);
  check_points(k, b);
  return covariance_from(transform_inputs(k, a), transform_inputs(k, b), k.amplitude);
}

void ObservationSet::add(const Vector& point, double value) {
  if (values_.size() == 0 && points_.cols() == 0) points_.resize(0, point.size());
  if (point.size() != points_.cols()) {
    throw std::invalid_argument("observation has dimension " + std::to_string(point.size()) + ", expected " +
                                std::to_string(points_.cols()));
  }
  for (Eigen::Index i = 0; i < points_.rows(); ++i) {
    if ((points_.row(i).transpose() - point).cwiseAbs().maxCoeff() <= 1e-12) {
      const int m = multiplicity_[static_cast<std::size_t>(i)];
      values_[i] = (values_[i] * m + value) / (m + 1);
      ++multiplicity_[static_cast<std::size_t>(i)];
      return;
    }
  }
  const Eigen::Index n = points_.rows();
  points_.conservativeResize(n + 1, Eigen::NoChange);
  points_.row(n) = point.transpose();
  values_.conservativeResize(n + 1);
  values_[n] = value;
  multiplicity_.push_back(1);
}

Eigen::Index ObservationSet::argmin() const {
  if (empty()) throw std::logic_error("argmin of an empty observation set");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values_.size(); ++i) {
    if (values_[i] < values_[best]) best = i;
  }
  return best;
}

PosteriorModel fit_posterior(ObservationSet obs, KernelParams kernel, PosteriorOptions options) {
  if (obs.empty()) throw std::invalid_argument("fit_posterior needs at least one observation");
  kernel.validate();
  check_points(kernel, obs.points());

  PosteriorModel model;
  std::tie(model.offset_, model.scale_) = standardization(obs.values(), options.standardize);
  const Vector z = (obs.values().array() - model.offset_) / model.scale_;

  const Matrix gram = cross_covariance(kernel, obs.points(), obs.points());
  Factorization f = factor_with_jitter(gram, kernel.noise_variance);
  if (!f.ok) throw NumericalFailure("covariance is not positive definite after jitter escalation", f.attempted);

  model.chol_ = f.llt.matrixL();
  model.alpha_ = f.llt.solve(z);
  model.jitter_ = f.jitter;
  model.obs_ = std::move(obs);
  model.kernel_ = std::move(kernel);
  return model;
}

Prediction predict(const PosteriorModel& model, const Matrix& points) {
  check_points(model.kernel(), points);
  const Matrix cross = cross_covariance(model.kernel(), model.observations().points(), points);
  const Matrix v = model.chol_factor().triangularView<Eigen::Lower>().solve(cross);
  Prediction out;
  out.mean = (cross.transpose() * model.alpha()).array() * model.value_scale() + model.value_offset();
  const double s2 = model.value_scale() * model.value_scale();
  out.variance = ((model.kernel().amplitude - v.colwise().squaredNorm().transpose().array()).cwiseMax(0.0) * s2).matrix();
  return out;
}

JointPrediction predict_joint(const PosteriorModel& model, const Matrix& points) {
  check_points(model.kernel(), points);
  const Matrix cross = cross_covariance(model.kernel(), model.observations().points(), points);
  const Matrix v = model.chol_factor().triangularView<Eigen::Lower>().solve(cross);
  const double s2 = model.value_scale() * model.value_scale();
  JointPrediction out;
  out.mean = (cross.transpose() * model.alpha()).array() * model.value_scale() + model.value_offset();
  Matrix cov = cross_covariance(model.kernel(), points, points) - v.transpose() * v;
  out.covariance = 0.5 * (cov + cov.transpose()) * s2;
  return out;
}

Matrix sample_joint(const PosteriorModel& model, const Matrix& points, int n_samples, std::uint64_t seed) {
  if (points.rows() < 1) throw std::invalid_argument("sample_joint needs at least one point");
  if (n_samples < 1) throw std::invalid_argument("sample_joint needs n_samples >= 1");
  const JointPrediction joint = predict_joint(model, points);
  const Eigen::Index q = points.rows();

  Matrix factor;
  Eigen::LLT<Matrix> llt(joint.covariance);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    // Semidefinite (e.g. observed or repeated points): symmetric square root with clamped spectrum.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(joint.covariance);
    if (eig.info() != Eigen::Success) throw NumericalFailure("predictive covariance eigensolve failed", {});
    const Vector lambda = eig.eigenvalues();
    // Cancellation in k(x, x) - v^T v is relative to the prior variance, not the posterior one.
    const double prior = model.kernel().amplitude * model.value_scale() * model.value_scale();
    const double tol = 1e-8 * std::max({1e-300, prior, lambda.cwiseAbs().maxCoeff()});
    if (lambda.minCoeff() < -tol) throw NumericalFailure("predictive covariance is indefinite", {});
    factor = eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  CounterRng rng(seed);
  Matrix out(n_samples, q);
  Vector z(q);
  for (int s = 0; s < n_samples; ++s) {
    for (Eigen::Index i = 0; i < q; ++i) z[i] = rng.normal();
    out.row(s) = (joint.mean + factor * z).transpose();
  }
  return out;
}

double log_marginal_likelihood(const ObservationSet& obs, const KernelParams& kernel, bool standardize) {
  if (obs.empty()) return 0.0;
  const auto [offset, scale] = standardization(obs.values(), standardize);
  const Vector z = (obs.values().array() - offset) / scale;
  const Matrix gram = cross_covariance(kernel, obs.points(), obs.points());
  Factorization f = factor_with_jitter(gram, kernel.noise_variance);
  if (!f.ok) return -std::numeric_limits<double>::infinity();
  const Vector alpha = f.llt.solve(z);
  const double log_det_half = f.llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(z.size());
  return -0.5 * z.dot(alpha) - log_det_half - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

namespace {

// Log-space parameterization used by the MLE search.
// ARD:         [log a0, log l_1, ..., log l_d]
// Mahalanobis: [log a0, then the lower-triangular Cholesky factor of Gamma row by row,
//               log on the diagonal, raw off the diagonal]
struct ParamCodec {
  KernelVariant variant;
  Eigen::Index dim;
  double noise;

  Eigen::Index size() const { return variant == KernelVariant::Ard ? dim + 1 : 1 + dim * (dim + 1) / 2; }

  bool is_log(Eigen::Index p) const {
    if (p == 0 || variant == KernelVariant::Ard) return true;
    Eigen::Index idx = 1;
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = 0; c <= r; ++c, ++idx) {
        if (idx == p) return r == c;
      }
    }
    return false;
  }

  Vector encode(const KernelParams& k) const {
    Vector theta(size());
    theta[0] = std::log(k.amplitude);
    if (variant == KernelVariant::Ard) {
      theta.tail(dim) = k.lengthscales.array().log();
      return theta;
    }
    Eigen::LLT<Matrix> llt(k.mahalanobis);
    const Matrix l = llt.matrixL();
    Eigen::Index idx = 1;
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = 0; c <= r; ++c) theta[idx++] = r == c ? std::log(l(r, c)) : l(r, c);
    }
    return theta;
  }

  KernelParams decode(const Vector& theta) const {
    if (variant == KernelVariant::Ard) {
      return KernelParams::ard(std::exp(theta[0]), theta.tail(dim).array().exp().matrix(), noise);
    }
    Matrix l = Matrix::Zero(dim, dim);
    Eigen::Index idx = 1;
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = 0; c <= r; ++c) {
        l(r, c) = r == c ? std::exp(theta[idx]) : theta[idx];
        ++idx;
      }
    }
    Matrix gamma = l * l.transpose();
    gamma = 0.5 * (gamma + gamma.transpose());
    // L L^T can lose definiteness to rounding when off-diagonals dominate.
    gamma.diagonal().array() += 1e-9 * gamma.diagonal().maxCoeff();
    return KernelParams::mahalanobis_kernel(std::exp(theta[0]), gamma, noise);
  }
};

struct Search {
  const ObservationSet& obs;
  const ParamCodec& codec;
  bool standardize;
  double lo_log_amp = std::log(1e-6);
  double hi_log_amp = std::log(1e4);
  double lo_log_scale;
  double hi_log_scale;

  double objective(const Vector& theta) const {
    return log_marginal_likelihood(obs, codec.decode(theta), standardize);
  }

  std::pair<double, double> bounds(Eigen::Index p, const Vector& theta) const {
    if (p == 0) return {lo_log_amp, hi_log_amp};
    if (codec.is_log(p)) return {lo_log_scale, hi_log_scale};
    double w = 1e-6;
    for (Eigen::Index i = 1; i < theta.size(); ++i) {
      if (codec.is_log(i)) w = std::max(w, std::exp(theta[i]));
    }
    return {theta[p] - 2.0 * w, theta[p] + 2.0 * w};
  }

  // Golden-section search on coordinate p; keeps the current value unless a probe beats it.
  double line_search(Vector& theta, double current, Eigen::Index p, int iterations) const {
    auto [lo, hi] = bounds(p, theta);
    if (codec.is_log(p)) {
      lo = std::max(lo, theta[p] - 2.0);
      hi = std::min(hi, theta[p] + 2.0);
    }
    if (!(hi > lo)) return current;
    constexpr double kInvPhi = 0.6180339887498949;
    Vector probe = theta;
    auto eval = [&](double x) {
      probe[p] = x;
      return objective(probe);
    };
    double a = lo;
    double b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = eval(c);
    double fd = eval(d);
    double best_x = theta[p];
    double best_f = current;
    auto consider = [&](double x, double fx) {
      if (fx > best_f) {
        best_f = fx;
        best_x = x;
      }
    };
    consider(c, fc);
    consider(d, fd);
    for (int it = 0; it < iterations; ++it) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = eval(c);
        consider(c, fc);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = eval(d);
        consider(d, fd);
      }
    }
    theta[p] = best_x;
    return best_f;
  }
};

KernelParams default_kernel(KernelVariant variant, Eigen::Index dim, double noise) {
  if (variant == KernelVariant::Ard) return KernelParams::ard(1.0, Vector::Constant(dim, 0.5), noise);
  return KernelParams::mahalanobis_kernel(1.0, Matrix::Identity(dim, dim) * 2.0, noise);
}

KernelParams random_kernel(KernelVariant variant, Eigen::Index dim, double noise, double hint, CounterRng& rng) {
  const double amp = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
  Vector ls(dim);
  for (Eigen::Index i = 0; i < dim; ++i) ls[i] = hint * std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
  if (variant == KernelVariant::Ard) return KernelParams::ard(amp, ls, noise);
  Matrix l = Matrix::Zero(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    l(r, r) = 1.0 / (std::sqrt(2.0) * ls[r]);
    for (Eigen::Index c = 0; c < r; ++c) l(r, c) = rng.uniform(-0.5, 0.5) * l(r, r);
  }
  return KernelParams::mahalanobis_kernel(amp, l * l.transpose(), noise);
}

}  // namespace

MleFit fit_kernel_mle(const ObservationSet& obs, KernelVariant variant, int restarts, std::uint64_t seed,
                      const MleOptions& options) {
  if (obs.size() < 2) throw std::invalid_argument("fit_kernel_mle needs at least two observations");
  const Eigen::Index dim = obs.dim();
  const ParamCodec codec{variant, dim, options.noise_variance};
  const double hint = options.lengthscale_hint > 0.0 ? options.lengthscale_hint : 1.0;
  Search search{obs, codec, options.standardize, std::log(1e-6), std::log(1e4), 0.0, 0.0};
  if (variant == KernelVariant::Ard) {
    search.lo_log_scale = std::log(1e-3 * hint);
    search.hi_log_scale = std::log(1e3 * hint);
  } else {
    search.lo_log_scale = std::log(1e-3 / hint);
    search.hi_log_scale = std::log(1e3 / hint);
  }

  KernelParams initial = options.initial.value_or(default_kernel(variant, dim, options.noise_variance));
  initial.noise_variance = options.noise_variance;
  if (initial.variant != variant || initial.dimension() != dim) {
    throw std::invalid_argument("initial kernel does not match the requested variant or dimension");
  }

  MleFit best;
  best.params = initial;
  best.log_likelihood = search.objective(codec.encode(initial));
  if (restarts <= 0) return best;

  CounterRng rng(derive_key(seed, 0x4D4C45));
  bool any_improved = false;
  for (int r = 0; r < restarts; ++r) {
    const KernelParams start = r == 0 ? initial : random_kernel(variant, dim, options.noise_variance, hint, rng);
    Vector theta = codec.encode(start);
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      const auto [lo, hi] = search.bounds(p, theta);
      theta[p] = std::clamp(theta[p], lo, hi);
    }
    const KernelParams start_params = codec.decode(theta);
    const double start_ll = search.objective(theta);
    double ll = start_ll;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      const double before = ll;
      for (Eigen::Index p = 0; p < theta.size(); ++p) {
        ll = search.line_search(theta, ll, p, options.line_search_iterations);
      }
      if (!(ll > before + 1e-7 * (1.0 + std::abs(before)))) break;
    }
    if (ll > start_ll) any_improved = true;
    if (ll > best.log_likelihood || (r == 0 && std::isinf(best.log_likelihood))) {
      best.log_likelihood = ll;
      best.params = codec.decode(theta);
    }
    // The random starts themselves count as candidates.
    if (start_ll > best.log_likelihood) {
      best.log_likelihood = start_ll;
      best.params = start_params;
    }
  }
  best.warning = !any_improved;
  return best;
}

}  // namespace oraclebo::gpr
