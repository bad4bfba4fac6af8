#include "oraclebo/objectives.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace oraclebo::objectives {

namespace {

constexpr double kHartmannAlpha[4] = {1.0, 1.2, 3.0, 3.2};
constexpr double kHartmannA[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                     {0.05, 10, 17, 0.1, 8, 14},
                                     {3, 3.5, 1.7, 10, 17, 8},
                                     {17, 8, 0.05, 10, 0.1, 14}};
constexpr double kHartmannP[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                     {2329, 4135, 8307, 3736, 1004, 9991},
                                     {2348, 1451, 3522, 2883, 3047, 6650},
                                     {4047, 8828, 8732, 5743, 1091, 381}};

// Open-cube margin for Hartmann6's (0, 1) domain.
constexpr double kOpenMargin = 1e-9;

std::size_t effective_dims(ObjectiveId id, std::size_t n_high) {
  switch (id) {
    case ObjectiveId::Branin:
      return 2;
    case ObjectiveId::Hartmann6:
      return 6;
    case ObjectiveId::Rosenbrock:
      return std::min<std::size_t>(4, n_high);
    default:
      return n_high;
  }
}

}  // namespace

std::string to_string(ObjectiveId id) {
  switch (id) {
    case ObjectiveId::P1:
      return "P1";
    case ObjectiveId::P2:
      return "P2";
    case ObjectiveId::P3:
      return "P3";
    case ObjectiveId::Branin:
      return "Branin";
    case ObjectiveId::Hartmann6:
      return "Hartmann6";
    case ObjectiveId::Rosenbrock:
      return "Rosenbrock";
  }
  return "unknown";
}

std::optional<ObjectiveId> parse_objective_id(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "p1") return ObjectiveId::P1;
  if (lower == "p2") return ObjectiveId::P2;
  if (lower == "p3") return ObjectiveId::P3;
  if (lower == "branin") return ObjectiveId::Branin;
  if (lower == "hartmann6" || lower == "hartmann") return ObjectiveId::Hartmann6;
  if (lower == "rosenbrock") return ObjectiveId::Rosenbrock;
  return std::nullopt;
}

Vector ObjectiveSpec::to_native(const Vector& h) const {
  if (static_cast<std::size_t>(h.size()) != n_high) throw std::invalid_argument("objective: dimension mismatch");
  Vector clamped = h;
  if (id == ObjectiveId::Hartmann6) clamped = h.cwiseMax(-1.0 + kOpenMargin).cwiseMin(1.0 - kOpenMargin);
  return lower.array() + (clamped.array() + 1.0) * 0.5 * (upper - lower).array();
}

double ObjectiveSpec::to_normalized(std::size_t j, double native) const {
  const auto k = static_cast<Eigen::Index>(j);
  return 2.0 * (native - lower[k]) / (upper[k] - lower[k]) - 1.0;
}

ObjectiveSpec make_objective(ObjectiveId id, std::size_t n_high, std::vector<std::size_t> active) {
  const std::size_t needed = effective_dims(id, n_high);
  if (n_high < 1) throw std::invalid_argument("objective needs at least one dimension");
  if (active.empty()) {
    active.resize(needed);
    for (std::size_t i = 0; i < needed; ++i) active[i] = i;
  }
  if (id == ObjectiveId::Branin || id == ObjectiveId::Hartmann6) {
    if (active.size() != needed) {
      throw std::invalid_argument(to_string(id) + " needs exactly " + std::to_string(needed) + " active coordinates");
    }
  }
  std::set<std::size_t> seen;
  for (std::size_t a : active) {
    if (a >= n_high) throw std::invalid_argument("active coordinate out of range");
    if (!seen.insert(a).second) throw std::invalid_argument("duplicate active coordinate");
  }

  ObjectiveSpec spec;
  spec.id = id;
  spec.n_high = n_high;
  spec.active = std::move(active);
  const auto n = static_cast<Eigen::Index>(n_high);
  switch (id) {
    case ObjectiveId::P1:
    case ObjectiveId::P2:
    case ObjectiveId::P3:
      spec.lower = Vector::Constant(n, -100.0);
      spec.upper = Vector::Constant(n, 100.0);
      spec.known_minimum = 0.0;
      spec.canonical_minimizer = Vector::Zero(n);
      break;
    case ObjectiveId::Branin:
      spec.lower = Vector::Constant(n, -5.0);
      spec.upper = Vector::Constant(n, 10.0);
      spec.lower[static_cast<Eigen::Index>(spec.active[1])] = 0.0;
      spec.upper[static_cast<Eigen::Index>(spec.active[1])] = 15.0;
      spec.known_minimum = kBraninMinimum;
      spec.canonical_minimizer = 0.5 * (spec.lower + spec.upper);
      spec.canonical_minimizer[static_cast<Eigen::Index>(spec.active[0])] = std::numbers::pi;
      spec.canonical_minimizer[static_cast<Eigen::Index>(spec.active[1])] = 2.275;
      break;
    case ObjectiveId::Hartmann6:
      spec.lower = Vector::Zero(n);
      spec.upper = Vector::Ones(n);
      spec.known_minimum = kHartmann6MinimumPrecise;
      spec.canonical_minimizer = Vector::Constant(n, 0.5);
      for (std::size_t i = 0; i < 6; ++i) {
        spec.canonical_minimizer[static_cast<Eigen::Index>(spec.active[i])] = kHartmann6Minimizer[i];
      }
      break;
    case ObjectiveId::Rosenbrock:
      spec.lower = Vector::Constant(n, -5.0);
      spec.upper = Vector::Constant(n, 10.0);
      spec.known_minimum = 0.0;
      spec.canonical_minimizer = Vector::Ones(n);
      break;
  }
  return spec;
}

double evaluate_native(const ObjectiveSpec& spec, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != spec.n_high) throw std::invalid_argument("objective: dimension mismatch");
  auto at = [&](std::size_t i) { return x[static_cast<Eigen::Index>(spec.active[i])]; };
  const std::size_t k = spec.active.size();
  double f = 0.0;
  switch (spec.id) {
    case ObjectiveId::P1:
      for (std::size_t i = 0; i < k; ++i) {
        const double t = std::floor(std::abs(at(i) + 0.5));
        f += t * t;
      }
      return f;
    case ObjectiveId::P2:
      for (std::size_t i = 0; i < k; ++i) f += std::floor(std::abs(at(i)));
      return f;
    case ObjectiveId::P3:
      for (std::size_t i = 0; i < k; ++i) f += std::floor(at(i) * at(i));
      return f;
    case ObjectiveId::Branin: {
      constexpr double pi = std::numbers::pi;
      constexpr double a = 1.0;
      constexpr double b = 5.1 / (4.0 * pi * pi);
      constexpr double c = 5.0 / pi;
      constexpr double r = 6.0;
      constexpr double s = 10.0;
      constexpr double t = 1.0 / (8.0 * pi);
      const double x1 = at(0);
      const double x2 = at(1);
      const double u = x2 - b * x1 * x1 + c * x1 - r;
      return a * u * u + s * (1.0 - t) * std::cos(x1) + s;
    }
    case ObjectiveId::Hartmann6:
      for (int i = 0; i < 4; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          const double d = at(j) - kHartmannP[i][j] * 1e-4;
          inner += kHartmannA[i][j] * d * d;
        }
        f -= kHartmannAlpha[i] * std::exp(-inner);
      }
      return f;
    case ObjectiveId::Rosenbrock:
      for (std::size_t i = 0; i + 1 < k; ++i) {
        const double u = at(i + 1) - at(i) * at(i);
        const double v = at(i) - 1.0;
        f += 100.0 * u * u + v * v;
      }
      return f;
  }
  return f;
}

double evaluate(const ObjectiveSpec& spec, const Vector& h) { return evaluate_native(spec, spec.to_native(h)); }

dms::DimensionFact dimension_query(const ObjectiveSpec& spec, std::size_t j) {
  if (j >= spec.n_high) throw std::out_of_range("dimension query index out of range");
  const double native = spec.canonical_minimizer[static_cast<Eigen::Index>(j)];
  return {j, std::clamp(spec.to_normalized(j, native), -1.0, 1.0)};
}

double regret(const ObjectiveSpec& spec, double best_f) {
  const double r = best_f - spec.known_minimum;
  if (r < -1e-9) throw std::logic_error(to_string(spec.id) + " value undercuts its known minimum");
  return r;
}

ObjectiveHandle to_handle(const ObjectiveSpec& spec) {
  ObjectiveHandle h;
  h.dimension = spec.n_high;
  h.evaluate = [spec](const Vector& x) { return evaluate(spec, x); };
  h.known_minimum = spec.known_minimum;
  h.sweepable = true;
  return h;
}

DimensionOracleHandle to_oracle(const ObjectiveSpec& spec) {
  DimensionOracleHandle o;
  o.dimension = spec.n_high;
  o.query = [spec](std::size_t j) { return dimension_query(spec, j); };
  return o;
}

}  // namespace oraclebo::objectives
