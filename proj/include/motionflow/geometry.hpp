#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "motionflow/common.hpp"

namespace motionflow {

// 3-component vector used both for positions and displacements.
struct Vec3 {
  real_t x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(real_t x_, real_t y_, real_t z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(real_t s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(real_t s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const {
    return x == o.x && y == o.y && z == o.z;
  }

  real_t dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  real_t squared_norm() const { return dot(*this); }
  real_t norm() const { return std::sqrt(squared_norm()); }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Vec3 operator*(real_t s, const Vec3& v) { return v * s; }

using Point3 = Vec3;

// Ordered point set; index i is an identity that downstream flows and
// correspondences refer back to.
struct PointCloud {
  std::vector<Point3> points;
  int frame_id = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Per-point displacements aligned with a source cloud.
struct FlowField {
  std::vector<Vec3> vectors;
  int source_frame_id = 0;

  std::size_t size() const { return vectors.size(); }
};

// Three consecutive frames plus, for synthetic data, the exact displacement
// fields frames[0]->frames[1] and frames[1]->frames[2].
struct Episode {
  std::array<PointCloud, 3> frames;
  std::optional<std::array<FlowField, 2>> gt_flows;
  std::string episode_id;
};

// Similarity transform p -> (p - translation) * scale shared by every frame
// of an episode.
struct NormalizeTransform {
  Vec3 translation{0, 0, 0};
  real_t scale = 1;

  Point3 apply(const Point3& p) const { return (p - translation) * scale; }
  Point3 invert(const Point3& p) const { return p / scale + translation; }

  PointCloud apply(const PointCloud& cloud) const {
    PointCloud out;
    out.frame_id = cloud.frame_id;
    out.points.reserve(cloud.size());
    for (const Point3& p : cloud.points) out.points.push_back(apply(p));
    return out;
  }
  PointCloud invert(const PointCloud& cloud) const {
    PointCloud out;
    out.frame_id = cloud.frame_id;
    out.points.reserve(cloud.size());
    for (const Point3& p : cloud.points) out.points.push_back(invert(p));
    return out;
  }
};

inline Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("centroid: empty cloud");
  Vec3 sum{0, 0, 0};
  for (const Point3& p : cloud.points) sum += p;
  return sum / static_cast<real_t>(cloud.size());
}

// Moves every point by its aligned flow vector. The result is the next
// frame, so frame_id advances by one.
inline PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow) {
  if (cloud.size() != flow.size())
    throw std::invalid_argument("apply_flow: cloud has " +
                                std::to_string(cloud.size()) +
                                " points but flow has " +
                                std::to_string(flow.size()) + " vectors");
  PointCloud out;
  out.frame_id = cloud.frame_id + 1;
  out.points.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out.points.push_back(cloud.points[i] + flow.vectors[i]);
  return out;
}

// Draws n points: without replacement while n <= |cloud| (n == |cloud| is a
// permutation), with replacement beyond that.
inline PointCloud sample_points(const PointCloud& cloud, std::size_t n,
                                std::uint64_t seed) {
  if (cloud.empty()) throw std::invalid_argument("sample_points: empty cloud");
  if (n < 1) throw std::invalid_argument("sample_points: n must be >= 1");
  std::mt19937_64 rng(seed);
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(n);
  if (n <= cloud.size()) {
    std::vector<std::size_t> idx(cloud.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.points.push_back(cloud.points[idx[i]]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    for (std::size_t i = 0; i < n; ++i)
      out.points.push_back(cloud.points[pick(rng)]);
  }
  return out;
}

// Anchors the transform on frame 0 (centroid to origin, max radius to 1) and
// applies it to all three frames so relative motion is preserved. A frame 0
// with near-zero radius keeps scale 1 instead of blowing up.
inline std::pair<Episode, NormalizeTransform> normalize_episode(
    const Episode& ep) {
  for (const PointCloud& f : ep.frames)
    if (f.empty())
      throw std::invalid_argument("normalize_episode: empty frame");
  NormalizeTransform t;
  t.translation = centroid(ep.frames[0]);
  real_t radius = 0;
  for (const Point3& p : ep.frames[0].points)
    radius = std::max(radius, (p - t.translation).norm());
  t.scale = radius < real_t(1e-9) ? real_t(1) : real_t(1) / radius;

  Episode out;
  out.episode_id = ep.episode_id;
  for (int k = 0; k < 3; ++k) out.frames[k] = t.apply(ep.frames[k]);
  if (ep.gt_flows) {
    std::array<FlowField, 2> flows;
    for (int k = 0; k < 2; ++k) {
      flows[k].source_frame_id = (*ep.gt_flows)[k].source_frame_id;
      flows[k].vectors.reserve((*ep.gt_flows)[k].size());
      for (const Vec3& v : (*ep.gt_flows)[k].vectors)
        flows[k].vectors.push_back(v * t.scale);
    }
    out.gt_flows = std::move(flows);
  }
  return {std::move(out), t};
}

// Independent N(0, sigma) perturbation of every coordinate.
inline PointCloud add_gaussian_noise(const PointCloud& cloud, real_t sigma,
                                     std::uint64_t seed) {
  if (sigma < 0)
    throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  if (sigma == 0) return cloud;
  std::mt19937_64 rng(seed);
  std::normal_distribution<real_t> gauss(0, sigma);
  PointCloud out = cloud;
  for (Point3& p : out.points) {
    p.x += gauss(rng);
    p.y += gauss(rng);
    p.z += gauss(rng);
  }
  return out;
}

// Removes every point within `radius` of n_holes centers sampled (without
// replacement) from the cloud's own points.
inline PointCloud cut_holes(const PointCloud& cloud, std::size_t n_holes,
                            real_t radius, std::uint64_t seed) {
  if (cloud.empty()) throw std::invalid_argument("cut_holes: empty cloud");
  if (radius <= 0) throw std::invalid_argument("cut_holes: radius must be > 0");
  if (n_holes == 0) return cloud;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n_centers = std::min(n_holes, cloud.size());
  std::vector<Point3> centers;
  centers.reserve(n_centers);
  for (std::size_t i = 0; i < n_centers; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    centers.push_back(cloud.points[idx[i]]);
  }

  const real_t r2 = radius * radius;
  PointCloud out;
  out.frame_id = cloud.frame_id;
  for (const Point3& p : cloud.points) {
    bool removed = false;
    for (const Point3& c : centers)
      if ((p - c).squared_norm() <= r2) {
        removed = true;
        break;
      }
    if (!removed) out.points.push_back(p);
  }
  if (out.empty())
    throw DegenerateInput("cut_holes: holes removed every point");
  return out;
}

// Deterministic core of make_partial: drops the floor(fraction*n) points
// farthest along `plane_normal` from the centroid. Ties are ordered by
// index, survivors keep their original order.
inline PointCloud cut_halfspace(const PointCloud& cloud,
                                const Vec3& plane_normal, real_t fraction) {
  if (cloud.empty()) throw std::invalid_argument("cut_halfspace: empty cloud");
  if (!(fraction > 0 && fraction < 1))
    throw std::invalid_argument("cut_halfspace: fraction must be in (0,1)");
  const std::size_t k =
      static_cast<std::size_t>(fraction * static_cast<real_t>(cloud.size()));
  if (k == 0) return cloud;

  const Vec3 c = centroid(cloud);
  std::vector<std::pair<real_t, std::size_t>> order;
  order.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    order.emplace_back((cloud.points[i] - c).dot(plane_normal), i);
  std::sort(order.begin(), order.end());

  std::vector<bool> keep(cloud.size(), true);
  for (std::size_t i = order.size() - k; i < order.size(); ++i)
    keep[order[i].second] = false;

  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size() - k);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (keep[i]) out.points.push_back(cloud.points[i]);
  return out;
}

// Cuts off one side of a random plane through the centroid.
inline PointCloud make_partial(const PointCloud& cloud, real_t fraction,
                               std::uint64_t seed) {
  if (cloud.empty()) throw std::invalid_argument("make_partial: empty cloud");
  if (!(fraction > 0 && fraction < 1))
    throw std::invalid_argument("make_partial: fraction must be in (0,1)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<real_t> gauss(0, 1);
  Vec3 normal;
  do {
    normal = Vec3{gauss(rng), gauss(rng), gauss(rng)};
  } while (normal.norm() < real_t(1e-12));
  normal = normal / normal.norm();
  return cut_halfspace(cloud, normal, fraction);
}

}  // namespace motionflow
