#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "motionflow/chamfer.hpp"
#include "motionflow/geometry.hpp"
#include "motionflow/morpher.hpp"

namespace motionflow {

struct AdamConfig {
  real_t lr = 1e-3;
  real_t beta1 = 0.9;
  real_t beta2 = 0.999;
  real_t eps = 1e-8;
};

// Moment accumulators for one flat parameter block.
struct AdamState {
  Vector m, v;
  long t = 0;
  AdamConfig cfg;

  explicit AdamState(Eigen::Index size = 0, AdamConfig c = {})
      : m(Vector::Zero(size)), v(Vector::Zero(size)), cfg(c) {}
};

// One bias-corrected Adam step, in place.
inline void adam_update(AdamState& state, Eigen::Ref<Vector> params,
                        const Eigen::Ref<const Vector>& grads) {
  if (params.size() != state.m.size() || grads.size() != state.m.size())
    throw std::invalid_argument("adam_update: shape mismatch");
  state.t += 1;
  const real_t b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  state.m = b1 * state.m + (1 - b1) * grads;
  state.v = b2 * state.v.array().matrix() +
            (1 - b2) * grads.array().square().matrix();
  const real_t corr1 = 1 - std::pow(b1, static_cast<real_t>(state.t));
  const real_t corr2 = 1 - std::pow(b2, static_cast<real_t>(state.t));
  params.array() -= state.cfg.lr * (state.m.array() / corr1) /
                    ((state.v.array() / corr2).sqrt() + state.cfg.eps);
}

// Adam over a whole net: one state per parameter tensor, stepped in lockstep.
class NetAdam {
 public:
  NetAdam() = default;
  NetAdam(const MorpherNet& net, AdamConfig cfg) {
    for (const LayerParams& l : net.layers) {
      weight_states_.emplace_back(l.weights.size(), cfg);
      bias_states_.emplace_back(l.bias.size(), cfg);
    }
  }

  void step(MorpherNet& net, const MorpherGrads& grads) {
    if (grads.weights.size() != weight_states_.size())
      throw std::invalid_argument("NetAdam: gradient shape mismatch");
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      Eigen::Map<Vector> w(net.layers[k].weights.data(),
                           net.layers[k].weights.size());
      Eigen::Map<const Vector> gw(grads.weights[k].data(),
                                  grads.weights[k].size());
      adam_update(weight_states_[k], w, gw);
      adam_update(bias_states_[k], net.layers[k].bias, grads.bias[k]);
    }
  }

 private:
  std::vector<AdamState> weight_states_;
  std::vector<AdamState> bias_states_;
};

// One optimizable latent code with its own optimizer state.
struct LatentEntry {
  Vector z;
  AdamState adam;
};

// pair_id -> latent code; one code per ordered frame pair.
struct LatentStore {
  std::map<std::string, LatentEntry> entries;
  int latent_dim = 0;
};

struct TrainConfig {
  std::size_t steps = 6000;
  real_t lr_theta = 1e-4;
  real_t lr_z = 1e-3;
  int latent_dim = 256;
  std::vector<int> hidden_dims = {512, 256, 128, 64};
  std::size_t n_points = 2048;
  real_t lambda_z = 0;  // optional ||z||^2 prior, off by default
  std::uint64_t seed = 0;
};

// Chamfer loss against a fixed target, as a LossFn for gradient checking and
// latent-only optimization.
inline LossFn make_chamfer_loss(PointCloud target) {
  auto target_ptr = std::make_shared<PointCloud>(std::move(target));
  LossFn loss;
  loss.value = [target_ptr](const PointCloud& deformed) {
    return chamfer_distance(deformed, *target_ptr).value;
  };
  loss.gradient = [target_ptr](const PointCloud& deformed) {
    ChamferResult ch = chamfer_distance(deformed, *target_ptr);
    return chamfer_gradient(ch, deformed, *target_ptr);
  };
  return loss;
}

struct TrainStepResult {
  real_t loss = 0;
  MorpherGrads param_grads;
  Vector z_grad;
};

// Loss and gradients for one (source, target) pair: deform the source by the
// predicted flow, score with the Chamfer distance, chain the Chamfer
// subgradient through the decoder. theta and z gradients come out of the same
// backward pass.
inline TrainStepResult train_step(const MorpherNet& net, const Vector& z,
                                  const PointCloud& source,
                                  const PointCloud& target,
                                  real_t lambda_z = 0) {
  auto [flow, tape] = forward(net, source, z);
  const PointCloud deformed = apply_flow(source, flow);
  const ChamferResult ch = chamfer_distance(deformed, target);
  const std::vector<Vec3> upstream = chamfer_gradient(ch, deformed, target);
  TrainStepResult out;
  auto [grads, z_grad] = backward(net, tape, upstream);
  out.param_grads = std::move(grads);
  out.z_grad = std::move(z_grad);
  out.loss = ch.value;
  if (lambda_z > 0) {
    out.loss += lambda_z * z.squaredNorm();
    out.z_grad += 2 * lambda_z * z;
  }
  return out;
}

// Latent codes drawn from one seeded standard-normal stream, in pair order.
inline LatentStore init_latents(const std::vector<std::string>& pair_ids,
                                int latent_dim, std::uint64_t seed,
                                real_t lr_z) {
  LatentStore store;
  store.latent_dim = latent_dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<real_t> gauss(0, 1);
  for (const std::string& id : pair_ids) {
    LatentEntry entry{Vector(latent_dim),
                      AdamState(latent_dim, AdamConfig{lr_z})};
    for (Eigen::Index i = 0; i < entry.z.size(); ++i) entry.z(i) = gauss(rng);
    store.entries.emplace(id, std::move(entry));
  }
  return store;
}

struct TrainResult {
  MorpherNet net;
  LatentStore latents;
  std::vector<real_t> loss_history;
};

// Called after every optimization step; used by the CLI for progress lines
// and periodic checkpoints.
using TrainCallback = std::function<void(
    std::size_t step, real_t loss, const MorpherNet&, const LatentStore&)>;

inline std::vector<std::string> episode_pair_ids(const Episode& ep) {
  return {ep.episode_id + ":01", ep.episode_id + ":12"};
}

// Joint optimization of decoder parameters and per-pair latent codes.
// Episodes are normalized on frame 0; every episode contributes the ordered
// pairs (frame0, frame1) and (frame1, frame2), each with its own latent code.
// Visits run in a seeded shuffled order, re-shuffled each epoch, with fresh
// point sampling per step. Fully deterministic given the config.
inline TrainResult train(const std::vector<Episode>& dataset,
                         const TrainConfig& config,
                         const TrainCallback& on_step = {}) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (config.steps < 1) throw std::invalid_argument("train: steps must be >= 1");

  struct Pair {
    std::string id;
    const PointCloud* source;
    const PointCloud* target;
  };
  std::vector<Episode> normalized;
  normalized.reserve(dataset.size());
  for (const Episode& ep : dataset)
    normalized.push_back(normalize_episode(ep).first);

  std::vector<Pair> pairs;
  std::vector<std::string> pair_ids;
  for (const Episode& ep : normalized) {
    const auto ids = episode_pair_ids(ep);
    pairs.push_back({ids[0], &ep.frames[0], &ep.frames[1]});
    pairs.push_back({ids[1], &ep.frames[1], &ep.frames[2]});
    pair_ids.push_back(ids[0]);
    pair_ids.push_back(ids[1]);
  }

  TrainResult result;
  result.net =
      init_net(config.latent_dim, config.hidden_dims, mix_seed(config.seed, 1));
  result.latents = init_latents(pair_ids, config.latent_dim,
                                mix_seed(config.seed, 2), config.lr_z);
  NetAdam net_adam(result.net, AdamConfig{config.lr_theta});

  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 3));
  const std::uint64_t sample_seed = mix_seed(config.seed, 4);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.loss_history.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (step % pairs.size() == 0)
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    const Pair& pair = pairs[order[step % pairs.size()]];
    LatentEntry& latent = result.latents.entries.at(pair.id);

    const PointCloud source =
        sample_points(*pair.source, config.n_points, mix_seed(sample_seed, 2 * step));
    const PointCloud target = sample_points(*pair.target, config.n_points,
                                            mix_seed(sample_seed, 2 * step + 1));

    TrainStepResult ts =
        train_step(result.net, latent.z, source, target, config.lambda_z);
    net_adam.step(result.net, ts.param_grads);
    adam_update(latent.adam, latent.z, ts.z_grad);
    result.loss_history.push_back(ts.loss);
    if (on_step) on_step(step, ts.loss, result.net, result.latents);
  }
  return result;
}

}  // namespace motionflow
