#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "motionflow/geometry.hpp"

namespace motionflow {

using Matrix =
    Eigen::Matrix<real_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<real_t, Eigen::Dynamic, 1>;

// Overflow-safe softplus ln(1 + e^x) and its derivative, the logistic
// sigmoid. For x > 30 the direct form would lose the x term, so it switches
// to x + ln(1 + e^-x).
inline real_t softplus(real_t x) {
  return x > real_t(30) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline real_t softplus_prime(real_t x) {
  return real_t(1) / (real_t(1) + std::exp(-x));
}

struct LayerParams {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim

  Eigen::Index out_dim() const { return weights.rows(); }
  Eigen::Index in_dim() const { return weights.cols(); }
};

// Decoder mapping [point, latent code] -> 3D flow vector. Softplus on every
// hidden layer, linear output so flow components can be negative.
struct MorpherNet {
  std::vector<LayerParams> layers;
  int latent_dim = 0;

  int input_dim() const { return 3 + latent_dim; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const LayerParams& l : layers)
      n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }
};

// Everything backward() needs from a forward pass: the input of every layer
// and its pre-activation, for the whole batch.
struct ForwardTape {
  std::vector<Matrix> inputs;    // inputs[k]: N x in_dim(k)
  std::vector<Matrix> preacts;   // preacts[k]: N x out_dim(k)
};

// Gradients shaped exactly like the net's parameters.
struct MorpherGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
inline MorpherNet init_net(int latent_dim, const std::vector<int>& hidden_dims,
                           std::uint64_t seed) {
  if (latent_dim < 1)
    throw std::invalid_argument("init_net: latent_dim must be >= 1");
  if (hidden_dims.empty())
    throw std::invalid_argument("init_net: hidden_dims must be non-empty");
  for (int d : hidden_dims)
    if (d < 1) throw std::invalid_argument("init_net: hidden dim must be >= 1");

  std::vector<int> dims;
  dims.push_back(3 + latent_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(3);

  MorpherNet net;
  net.latent_dim = latent_dim;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const int in = dims[k], out = dims[k + 1];
    const real_t bound = real_t(1) / std::sqrt(static_cast<real_t>(in));
    std::uniform_real_distribution<real_t> uniform(-bound, bound);
    LayerParams layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = uniform(rng);
    layer.bias = Vector::Zero(out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace detail {

// Rows are [p_i, z]: the same latent code is concatenated to every point.
inline Matrix assemble_input(const MorpherNet& net, const PointCloud& points,
                             const Vector& z) {
  if (points.empty())
    throw std::invalid_argument("morpher forward: empty cloud");
  if (z.size() != net.latent_dim)
    throw std::invalid_argument(
        "morpher forward: latent has length " + std::to_string(z.size()) +
        " but net expects " + std::to_string(net.latent_dim));
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  Matrix x(n, net.input_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point3& p = points.points[static_cast<std::size_t>(i)];
    x(i, 0) = p.x;
    x(i, 1) = p.y;
    x(i, 2) = p.z;
    x.row(i).tail(net.latent_dim) = z.transpose();
  }
  return x;
}

// Shared forward pass; fills the tape when one is given.
inline Matrix run_forward(const MorpherNet& net, Matrix x, ForwardTape* tape) {
  const std::size_t n_layers = net.layers.size();
  if (tape) {
    tape->inputs.clear();
    tape->preacts.clear();
    tape->inputs.reserve(n_layers);
    tape->preacts.reserve(n_layers);
  }
  for (std::size_t k = 0; k < n_layers; ++k) {
    const LayerParams& layer = net.layers[k];
    if (x.cols() != layer.in_dim())
      throw std::invalid_argument("morpher forward: layer " +
                                  std::to_string(k) + " dimension mismatch");
    Matrix pre = x * layer.weights.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (tape) tape->inputs.push_back(std::move(x));
    if (k + 1 < n_layers) {
      x = pre.unaryExpr([](real_t v) { return softplus(v); });
    } else {
      x = pre;
    }
    if (tape) tape->preacts.push_back(std::move(pre));
  }
  return x;
}

inline FlowField to_flow(const Matrix& out, const PointCloud& points) {
  FlowField flow;
  flow.source_frame_id = points.frame_id;
  flow.vectors.reserve(points.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    flow.vectors.push_back({out(i, 0), out(i, 1), out(i, 2)});
  return flow;
}

inline Matrix upstream_to_matrix(const std::vector<Vec3>& upstream) {
  Matrix g(static_cast<Eigen::Index>(upstream.size()), 3);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Vec3& v = upstream[static_cast<std::size_t>(i)];
    g(i, 0) = v.x;
    g(i, 1) = v.y;
    g(i, 2) = v.z;
  }
  return g;
}

// Reverse pass. With grads == nullptr only the input-gradient chain is
// computed (enough for latent-only optimization). Bias and latent reductions
// run over points in ascending index order so accumulation is deterministic.
inline Vector run_backward(const MorpherNet& net, const ForwardTape& tape,
                           Matrix g, MorpherGrads* grads) {
  const std::size_t n_layers = net.layers.size();
  if (tape.inputs.size() != n_layers || tape.preacts.size() != n_layers)
    throw std::invalid_argument("morpher backward: tape does not match net");
  if (g.rows() != tape.inputs[0].rows() || g.cols() != 3)
    throw std::invalid_argument(
        "morpher backward: upstream gradient shape mismatch");
  if (grads) {
    grads->weights.assign(n_layers, Matrix());
    grads->bias.assign(n_layers, Vector());
  }
  for (std::size_t k = n_layers; k-- > 0;) {
    const LayerParams& layer = net.layers[k];
    if (grads) {
      grads->weights[k].noalias() = g.transpose() * tape.inputs[k];
      Vector db = Vector::Zero(layer.out_dim());
      for (Eigen::Index i = 0; i < g.rows(); ++i) db += g.row(i).transpose();
      grads->bias[k] = std::move(db);
    }
    Matrix gx = g * layer.weights;
    if (k > 0)
      gx.array() *= tape.preacts[k - 1].unaryExpr([](real_t v) {
        return softplus_prime(v);
      }).array();
    g = std::move(gx);
  }
  // g is now N x (3 + latent_dim); the latent is shared across points, so
  // its gradient is the per-point sum.
  Vector z_grad = Vector::Zero(net.latent_dim);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    z_grad += g.row(i).tail(net.latent_dim).transpose();
  return z_grad;
}

}  // namespace detail

// Evaluates the flow at every point with the shared latent code z and records
// the tape needed for backward().
inline std::pair<FlowField, ForwardTape> forward(const MorpherNet& net,
                                                 const PointCloud& points,
                                                 const Vector& z) {
  ForwardTape tape;
  Matrix out = detail::run_forward(net, detail::assemble_input(net, points, z),
                                   &tape);
  return {detail::to_flow(out, points), std::move(tape)};
}

// Forward pass without tape state, for inference.
inline FlowField forward_no_tape(const MorpherNet& net,
                                 const PointCloud& points, const Vector& z) {
  Matrix out = detail::run_forward(net, detail::assemble_input(net, points, z),
                                   nullptr);
  return detail::to_flow(out, points);
}

// upstream[i] = dL/dflow_i. Returns gradients for every layer plus the latent
// gradient (summed over points, ascending index order).
inline std::pair<MorpherGrads, Vector> backward(
    const MorpherNet& net, const ForwardTape& tape,
    const std::vector<Vec3>& upstream) {
  MorpherGrads grads;
  Vector z_grad = detail::run_backward(
      net, tape, detail::upstream_to_matrix(upstream), &grads);
  return {std::move(grads), std::move(z_grad)};
}

// Latent gradient only; skips the parameter-gradient GEMMs.
inline Vector backward_latent(const MorpherNet& net, const ForwardTape& tape,
                              const std::vector<Vec3>& upstream) {
  return detail::run_backward(net, tape,
                              detail::upstream_to_matrix(upstream), nullptr);
}

// A scalar loss over a deformed cloud together with its gradient; what
// gradient_check differentiates through.
struct LossFn {
  std::function<real_t(const PointCloud& deformed)> value;
  std::function<std::vector<Vec3>(const PointCloud& deformed)> gradient;
};

struct GradCheckReport {
  real_t max_rel_error = 0;
  std::size_t weights_checked = 0;
  std::size_t biases_checked = 0;
  std::size_t latents_checked = 0;
  real_t tol = 0;
  bool pass = false;
};

// Central finite differences of loss(points + flow) against the analytic
// backward pass, over >= n_weight_samples sampled weight entries, a sample of
// bias entries and all latent entries. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1).
inline GradCheckReport gradient_check(const MorpherNet& net,
                                      const PointCloud& points, const Vector& z,
                                      const LossFn& loss, real_t h, real_t tol,
                                      std::size_t n_weight_samples = 100,
                                      std::uint64_t seed = 0) {
  if (h <= 0) throw std::invalid_argument("gradient_check: h must be > 0");

  MorpherNet work = net;
  Vector zw = z;
  const auto eval = [&]() {
    FlowField flow = forward_no_tape(work, points, zw);
    return loss.value(apply_flow(points, flow));
  };

  auto [flow, tape] = forward(work, points, zw);
  std::vector<Vec3> upstream = loss.gradient(apply_flow(points, flow));
  auto [grads, z_grad] = backward(work, tape, upstream);

  GradCheckReport report;
  report.tol = tol;
  const auto record = [&](real_t analytic, real_t numeric) {
    const real_t denom = std::max({std::abs(analytic), std::abs(numeric),
                                   real_t(1)});
    report.max_rel_error =
        std::max(report.max_rel_error, std::abs(analytic - numeric) / denom);
  };
  const auto central = [&](real_t& param) {
    const real_t saved = param;
    param = saved + h;
    const real_t up = eval();
    param = saved - h;
    const real_t down = eval();
    param = saved;
    return (up - down) / (2 * h);
  };

  // Sampled weight entries (all of them when the net is small).
  std::size_t total_weights = 0;
  for (const LayerParams& l : work.layers)
    total_weights += static_cast<std::size_t>(l.weights.size());
  std::vector<std::size_t> flat(total_weights);
  std::iota(flat.begin(), flat.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0xC0FFEE));
  const std::size_t n_w = std::min(n_weight_samples, total_weights);
  for (std::size_t i = 0; i < n_w; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, flat.size() - 1);
    std::swap(flat[i], flat[pick(rng)]);
    std::size_t offset = flat[i];
    for (std::size_t k = 0; k < work.layers.size(); ++k) {
      const std::size_t sz =
          static_cast<std::size_t>(work.layers[k].weights.size());
      if (offset < sz) {
        record(grads.weights[k](static_cast<Eigen::Index>(offset /
                   static_cast<std::size_t>(work.layers[k].in_dim())),
               static_cast<Eigen::Index>(offset %
                   static_cast<std::size_t>(work.layers[k].in_dim()))),
               central(work.layers[k].weights.data()[offset]));
        break;
      }
      offset -= sz;
    }
  }
  report.weights_checked = n_w;

  // Sampled bias entries.
  std::size_t total_bias = 0;
  for (const LayerParams& l : work.layers)
    total_bias += static_cast<std::size_t>(l.bias.size());
  std::vector<std::size_t> flat_b(total_bias);
  std::iota(flat_b.begin(), flat_b.end(), std::size_t{0});
  const std::size_t n_b = std::min(n_weight_samples, total_bias);
  for (std::size_t i = 0; i < n_b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, flat_b.size() - 1);
    std::swap(flat_b[i], flat_b[pick(rng)]);
    std::size_t offset = flat_b[i];
    for (std::size_t k = 0; k < work.layers.size(); ++k) {
      const std::size_t sz = static_cast<std::size_t>(work.layers[k].bias.size());
      if (offset < sz) {
        record(grads.bias[k](static_cast<Eigen::Index>(offset)),
               central(work.layers[k].bias(static_cast<Eigen::Index>(offset))));
        break;
      }
      offset -= sz;
    }
  }
  report.biases_checked = n_b;

  // All latent entries.
  for (Eigen::Index i = 0; i < zw.size(); ++i)
    record(z_grad(i), central(zw(i)));
  report.latents_checked = static_cast<std::size_t>(zw.size());

  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace motionflow
