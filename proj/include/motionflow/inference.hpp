#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "motionflow/chamfer.hpp"
#include "motionflow/geometry.hpp"
#include "motionflow/morpher.hpp"
#include "motionflow/training.hpp"

namespace motionflow {

struct InferConfig {
  std::size_t max_iters = 800;
  real_t lr_z = 1e-3;
  real_t rel_tol = 1e-6;     // relative improvement below this counts as stalled
  std::size_t patience = 20; // consecutive stalled iterations before stopping
  std::size_t n_points = 2048;
  std::uint64_t seed = 0;
};

struct PredictionResult {
  Vector z_hat;
  PointCloud predicted_frame;          // one frame past the newer input
  std::vector<Point3> correspondence;  // input index i -> predicted position
  std::vector<real_t> loss_history;
};

struct LatentOptResult {
  Vector z_hat;
  std::vector<real_t> loss_history;
};

// Fits a fresh latent code to an observed pair with the decoder frozen.
// The code starts from a seeded N(0,1) draw and follows Adam on the Chamfer
// loss of (P + flow, Q). Stops at max_iters or once the relative improvement
// stays below rel_tol for `patience` consecutive iterations; returns the
// best-loss iterate, not the last. Clouds larger than n_points are
// subsampled once up front.
inline LatentOptResult optimize_latent(const MorpherNet& net,
                                       const PointCloud& source,
                                       const PointCloud& target,
                                       const InferConfig& config) {
  if (source.empty() || target.empty())
    throw std::invalid_argument("optimize_latent: empty cloud");
  if (config.max_iters < 1)
    throw std::invalid_argument("optimize_latent: max_iters must be >= 1");

  const PointCloud p =
      source.size() > config.n_points
          ? sample_points(source, config.n_points, mix_seed(config.seed, 1))
          : source;
  const PointCloud q =
      target.size() > config.n_points
          ? sample_points(target, config.n_points, mix_seed(config.seed, 2))
          : target;

  Vector z(net.latent_dim);
  {
    std::mt19937_64 rng(mix_seed(config.seed, 0));
    std::normal_distribution<real_t> gauss(0, 1);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  }
  AdamState adam(net.latent_dim, AdamConfig{config.lr_z});

  LatentOptResult result;
  result.z_hat = z;
  real_t best = std::numeric_limits<real_t>::infinity();
  real_t prev = std::numeric_limits<real_t>::infinity();
  std::size_t stalled = 0;
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    auto [flow, tape] = forward(net, p, z);
    const PointCloud deformed = apply_flow(p, flow);
    const ChamferResult ch = chamfer_distance(deformed, q);
    result.loss_history.push_back(ch.value);
    if (ch.value < best) {
      best = ch.value;
      result.z_hat = z;
    }
    if (iter > 0) {
      const real_t improvement =
          (prev - ch.value) / std::max(std::abs(prev), real_t(1e-30));
      stalled = improvement < config.rel_tol ? stalled + 1 : 0;
      if (stalled >= config.patience) break;
    }
    prev = ch.value;

    const std::vector<Vec3> upstream = chamfer_gradient(ch, deformed, q);
    Vector z_grad = backward_latent(net, tape, upstream);
    adam_update(adam, z, z_grad);
  }
  return result;
}

// Pure forward evaluation of the flow at a cloud; no tape retained.
inline FlowField predict_flow(const MorpherNet& net, const PointCloud& cloud,
                              const Vector& z) {
  return forward_no_tape(net, cloud, z);
}

// Fits a latent code to the observed pair (P, Q), then extrapolates one frame
// by applying the same code's flow to Q. Inputs are normalized on P (same
// anchoring as training episodes) and the outputs mapped back, so callers
// work in their own coordinates while loss_history stays in normalized units.
// The correspondence maps Q's index i to the predicted position of that
// point.
inline PredictionResult predict_future(const MorpherNet& net,
                                       const PointCloud& source,
                                       const PointCloud& target,
                                       const InferConfig& config) {
  if (source.empty() || target.empty())
    throw std::invalid_argument("predict_future: empty cloud");

  NormalizeTransform t;
  t.translation = centroid(source);
  real_t radius = 0;
  for (const Point3& p : source.points)
    radius = std::max(radius, (p - t.translation).norm());
  t.scale = radius < real_t(1e-9) ? real_t(1) : real_t(1) / radius;

  const PointCloud p = t.apply(source);
  const PointCloud q = t.apply(target);

  LatentOptResult opt = optimize_latent(net, p, q, config);
  const FlowField flow = predict_flow(net, q, opt.z_hat);
  const PointCloud predicted_norm = apply_flow(q, flow);

  PredictionResult result;
  result.z_hat = std::move(opt.z_hat);
  result.loss_history = std::move(opt.loss_history);
  result.predicted_frame = t.invert(predicted_norm);
  result.predicted_frame.frame_id = target.frame_id + 1;
  result.correspondence = result.predicted_frame.points;
  return result;
}

}  // namespace motionflow
