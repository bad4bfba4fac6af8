#pragma once

#include "oraclebo/acquisition.hpp"

#include <cstddef>
#include <span>

namespace oraclebo::dms {

using Vector = Eigen::VectorXd;

/// One revealed minimizer coordinate, in normalized [-1, 1] units.
struct DimensionFact {
  std::size_t index = 0;
  double value = 0.0;
};

/// How often the qEI term enters the joint likelihood: once, or once per revealed dimension
/// (the literal product over dimensions).
enum class QeiWeighting { Single, PerDimension };

struct DmsConfig {
  double sigma = 1.0;
  QeiWeighting weighting = QeiWeighting::Single;
};

struct DmsSelection {
  std::size_t batch_index = 0;
  Vector chosen_high;
  Vector chosen_low;
  double log_likelihood = 0.0;
};

/// w * log qEI(h) + sum_j log N(h[j]; h*[j], sigma^2) for one candidate. `use_qei` = false drops the
/// qEI term (used when every candidate has zero qEI).
double log_score(const Vector& high, double qei, std::span<const DimensionFact> facts, const DmsConfig& cfg,
                 bool use_qei = true);

/// Argmax of log_score over the batch; ties go to the lowest batch index.
DmsSelection dms_select(const acquisition::CandidateBatch& batch, std::span<const DimensionFact> facts,
                        const DmsConfig& cfg);

}  // namespace oraclebo::dms
