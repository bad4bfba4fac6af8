#include "oraclebo/dms.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace oraclebo::dms {

double log_score(const Vector& high, double qei, std::span<const DimensionFact> facts, const DmsConfig& cfg,
                 bool use_qei) {
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("DMS sigma must be positive");
  double score = 0.0;
  if (use_qei) {
    if (!(qei > 0.0)) return -std::numeric_limits<double>::infinity();
    // An empty fact set still ranks by qEI alone.
    const double w =
        cfg.weighting == QeiWeighting::Single || facts.empty() ? 1.0 : static_cast<double>(facts.size());
    score += w * std::log(qei);
  }
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * cfg.sigma * cfg.sigma);
  for (const DimensionFact& fact : facts) {
    if (fact.index >= static_cast<std::size_t>(high.size())) throw std::out_of_range("dimension fact index out of range");
    const double r = (high[static_cast<Eigen::Index>(fact.index)] - fact.value) / cfg.sigma;
    score += log_norm - 0.5 * r * r;
  }
  return score;
}

DmsSelection dms_select(const acquisition::CandidateBatch& batch, std::span<const DimensionFact> facts,
                        const DmsConfig& cfg) {
  const Eigen::Index q = batch.points_low.rows();
  if (q < 1) throw std::invalid_argument("dms_select: empty batch");
  const bool any_positive = (batch.qei.array() > 0.0).any();

  DmsSelection out;
  double best = -std::numeric_limits<double>::infinity();
  Eigen::Index best_index = 0;
  bool found = false;
  for (Eigen::Index i = 0; i < q; ++i) {
    const Vector high = batch.points_high.row(i).transpose();
    const double s = log_score(high, batch.qei[i], facts, cfg, any_positive);
    if (!found || s > best) {
      best = s;
      best_index = i;
      found = true;
    }
  }
  out.batch_index = static_cast<std::size_t>(best_index);
  out.chosen_high = batch.points_high.row(best_index).transpose();
  out.chosen_low = batch.points_low.row(best_index).transpose();
  out.log_likelihood = best;
  return out;
}

}  // namespace oraclebo::dms
