#pragma once

#include <stdexcept>
#include <vector>

#include "motionflow/chamfer.hpp"
#include "motionflow/geometry.hpp"

namespace motionflow {

// Fraction of correctly matched points as a function of the distance
// threshold; non-decreasing and bounded in [0,1] by construction.
struct CmaCurve {
  std::vector<real_t> thresholds;
  std::vector<real_t> accuracies;
};

inline real_t eval_chamfer(const PointCloud& pred, const PointCloud& gt) {
  return chamfer_distance(pred, gt).value;
}

// Mean Euclidean error over index-aligned positions.
inline real_t correspondence_l2(const PointCloud& pred_positions,
                                const PointCloud& gt_positions) {
  if (pred_positions.size() != gt_positions.size())
    throw std::invalid_argument("correspondence_l2: length mismatch");
  if (pred_positions.empty())
    throw std::invalid_argument("correspondence_l2: empty input");
  real_t sum = 0;
  for (std::size_t i = 0; i < pred_positions.size(); ++i)
    sum += (pred_positions.points[i] - gt_positions.points[i]).norm();
  return sum / static_cast<real_t>(pred_positions.size());
}

// Default evaluation grid: 0.00, 0.01, ..., 0.20 in normalized units.
inline std::vector<real_t> default_cma_thresholds() {
  std::vector<real_t> out;
  for (int i = 0; i <= 20; ++i)
    out.push_back(static_cast<real_t>(i) / real_t(100));
  return out;
}

// accuracy(delta) = fraction of indices whose error is <= delta (inclusive).
inline CmaCurve cumulative_matching_accuracy(
    const PointCloud& pred_positions, const PointCloud& gt_positions,
    const std::vector<real_t>& thresholds) {
  if (pred_positions.size() != gt_positions.size())
    throw std::invalid_argument(
        "cumulative_matching_accuracy: length mismatch");
  if (pred_positions.empty())
    throw std::invalid_argument("cumulative_matching_accuracy: empty input");
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
    if (thresholds[i] > thresholds[i + 1])
      throw std::invalid_argument(
          "cumulative_matching_accuracy: thresholds must be ascending");
  for (real_t d : thresholds)
    if (d < 0)
      throw std::invalid_argument(
          "cumulative_matching_accuracy: thresholds must be >= 0");

  std::vector<real_t> errors;
  errors.reserve(pred_positions.size());
  for (std::size_t i = 0; i < pred_positions.size(); ++i)
    errors.push_back(
        (pred_positions.points[i] - gt_positions.points[i]).norm());

  CmaCurve curve;
  curve.thresholds = thresholds;
  curve.accuracies.reserve(thresholds.size());
  for (real_t delta : thresholds) {
    std::size_t hits = 0;
    for (real_t e : errors)
      if (e <= delta) ++hits;
    curve.accuracies.push_back(static_cast<real_t>(hits) /
                               static_cast<real_t>(errors.size()));
  }
  return curve;
}

}  // namespace motionflow
