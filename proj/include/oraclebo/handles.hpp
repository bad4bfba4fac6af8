#pragma once

#include "oraclebo/dms.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>

namespace oraclebo {

/// A black-box objective over normalized coordinates [-1, 1]^N.
struct ObjectiveHandle {
  std::size_t dimension = 0;
  std::function<double(const Eigen::VectorXd&)> evaluate;
  std::optional<double> known_minimum;
  /// Whether coordinate sweeps are allowed (synthetic objectives only).
  bool sweepable = false;
};

/// Answers dimension queries h*[j] about the objective's minimizer.
struct DimensionOracleHandle {
  std::size_t dimension = 0;
  std::function<dms::DimensionFact(std::size_t)> query;
};

}  // namespace oraclebo
