#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "motionflow/geometry.hpp"

namespace motionflow {

enum class MotionKind { rigid_rotation, bending_sheet, articulated_hinge };

inline const char* motion_kind_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::rigid_rotation: return "rigid_rotation";
    case MotionKind::bending_sheet: return "bending_sheet";
    case MotionKind::articulated_hinge: return "articulated_hinge";
  }
  return "unknown";
}

inline MotionKind motion_kind_from_name(const std::string& name) {
  if (name == "rigid_rotation") return MotionKind::rigid_rotation;
  if (name == "bending_sheet") return MotionKind::bending_sheet;
  if (name == "articulated_hinge") return MotionKind::articulated_hinge;
  throw std::invalid_argument("unknown motion family: " + name);
}

// A family of synthetic deforming shapes. The per-frame motion parameter
// (rotation / hinge angle step, sheet phase step) is constant within an
// episode, so the third frame is exactly predictable from the first two.
// step_min == step_max pins the step; random_axis draws a fresh rotation or
// hinge axis per episode instead of using `axis`.
struct MotionFamily {
  MotionKind kind = MotionKind::rigid_rotation;
  Vec3 axis{0, 0, 1};
  bool random_axis = false;
  real_t step_min = 0.15;        // angular / phase step, radians
  real_t step_max = 0.35;
  real_t bend_amplitude = 0.4;   // bending_sheet only
  std::uint64_t base_shape_seed = 0;
  bool resample_frames = false;  // emulate non-corresponding raw scans
};

namespace detail {

constexpr real_t kMaxAngularStep = 0.7853981633974483;  // pi/4
constexpr real_t kSheetWavenumber = 3.141592653589793;

inline void validate_family(const MotionFamily& family) {
  const bool zero_motion = family.step_min == 0 && family.step_max == 0;
  if (!zero_motion &&
      !(family.step_min > 0 && family.step_min <= family.step_max &&
        family.step_max <= kMaxAngularStep))
    throw std::invalid_argument(
        "MotionFamily: steps must satisfy 0 < step_min <= step_max <= pi/4 "
        "(or both be 0 for a static family)");
  if (family.kind == MotionKind::bending_sheet && family.bend_amplitude < 0)
    throw std::invalid_argument("MotionFamily: bend_amplitude must be >= 0");
  if (!family.random_axis && family.axis.norm() < real_t(1e-12))
    throw std::invalid_argument("MotionFamily: axis must be non-zero");
}

inline Vec3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<real_t> gauss(0, 1);
  Vec3 v;
  do {
    v = Vec3{gauss(rng), gauss(rng), gauss(rng)};
  } while (v.norm() < real_t(1e-6));
  return v / v.norm();
}

// Rodrigues rotation of p about unit axis by angle.
inline Point3 rotate(const Point3& p, const Vec3& axis, real_t angle) {
  const real_t c = std::cos(angle), s = std::sin(angle);
  return p * c + axis.cross(p) * s + axis * (axis.dot(p) * (1 - c));
}

inline std::vector<Point3> gaussian_blob(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<real_t> gauss(0, 0.5);
  std::vector<Point3> pts(n);
  for (Point3& p : pts) p = Point3{gauss(rng), gauss(rng), gauss(rng)};
  return pts;
}

inline std::vector<Point3> flat_grid(std::size_t n) {
  const std::size_t nx =
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; pts.size() < n; ++i) {
    const std::size_t row = i / nx, col = i % nx;
    const real_t step = nx > 1 ? real_t(2) / static_cast<real_t>(nx - 1) : 0;
    pts.push_back(Point3{-1 + static_cast<real_t>(col) * step,
                         -1 + static_cast<real_t>(row) * step, 0});
  }
  return pts;
}

inline Point3 deform(const MotionFamily& family, const Point3& base,
                     const Vec3& axis, real_t step, int phase) {
  switch (family.kind) {
    case MotionKind::rigid_rotation:
      return rotate(base, axis, static_cast<real_t>(phase) * step);
    case MotionKind::bending_sheet: {
      Point3 p = base;
      p.z = base.z + family.bend_amplitude *
                         std::sin(kSheetWavenumber * base.x +
                                  static_cast<real_t>(phase) * step);
      return p;
    }
    case MotionKind::articulated_hinge:
      if (base.x > 0)
        return rotate(base, axis, static_cast<real_t>(phase) * step);
      return base;
  }
  return base;
}

}  // namespace detail

// Builds one 3-frame episode by deforming the same base point set at phases
// 0, 1 and 2. With resampling off, gt_flows hold exact per-point
// displacements and frames[k+1] == frames[k] + gt_flows[k] bit for bit. With
// resampling on, each frame is an independent subsample of a denser shape and
// gt_flows are absent.
inline Episode gen_episode(const MotionFamily& family, std::size_t n_points,
                           std::uint64_t seed) {
  if (n_points < 8)
    throw std::invalid_argument("gen_episode: n_points must be >= 8");
  detail::validate_family(family);

  std::mt19937_64 rng(mix_seed(family.base_shape_seed, seed));
  const Vec3 axis = family.random_axis ? detail::random_unit_vector(rng)
                                       : family.axis / family.axis.norm();
  real_t step = family.step_min;
  if (family.step_max > family.step_min) {
    std::uniform_real_distribution<real_t> pick(family.step_min,
                                                family.step_max);
    step = pick(rng);
  }

  const std::size_t base_n =
      family.resample_frames ? 4 * n_points : n_points;
  std::vector<Point3> base = family.kind == MotionKind::bending_sheet
                                 ? detail::flat_grid(base_n)
                                 : detail::gaussian_blob(base_n, rng);

  Episode ep;
  ep.episode_id = std::string(motion_kind_name(family.kind)) + "-" +
                  std::to_string(seed);

  if (family.resample_frames) {
    for (int k = 0; k < 3; ++k) {
      PointCloud full;
      full.frame_id = k;
      full.points.reserve(base.size());
      for (const Point3& p : base)
        full.points.push_back(detail::deform(family, p, axis, step, k));
      ep.frames[k] = sample_points(full, n_points, mix_seed(seed, 100 + k));
    }
    return ep;
  }

  std::array<FlowField, 2> flows;
  for (int k = 0; k < 3; ++k) {
    ep.frames[k].frame_id = k;
    ep.frames[k].points.reserve(n_points);
  }
  for (const Point3& p : base)
    ep.frames[0].points.push_back(detail::deform(family, p, axis, step, 0));
  // Later frames are rebuilt as frame + flow so that apply_flow reproduces
  // them exactly.
  for (int k = 0; k < 2; ++k) {
    flows[k].source_frame_id = k;
    flows[k].vectors.reserve(n_points);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const Point3 next = detail::deform(family, base[i], axis, step, k + 1);
      flows[k].vectors.push_back(next - ep.frames[k].points[i]);
      ep.frames[k + 1].points.push_back(ep.frames[k].points[i] +
                                        flows[k].vectors[i]);
    }
  }
  ep.gt_flows = std::move(flows);
  return ep;
}

// Deterministic dataset: episodes_per_family per family, ids encoding the
// family and index.
inline std::vector<Episode> gen_dataset(
    const std::vector<MotionFamily>& families, std::size_t episodes_per_family,
    std::size_t n_points, std::uint64_t seed) {
  if (families.empty())
    throw std::invalid_argument("gen_dataset: no families given");
  std::vector<Episode> out;
  out.reserve(families.size() * episodes_per_family);
  for (std::size_t f = 0; f < families.size(); ++f) {
    for (std::size_t e = 0; e < episodes_per_family; ++e) {
      Episode ep = gen_episode(families[f], n_points,
                               mix_seed(seed, f * 1000003 + e));
      ep.episode_id = std::string(motion_kind_name(families[f].kind)) + "-f" +
                      std::to_string(f) + "-e" + std::to_string(e);
      out.push_back(std::move(ep));
    }
  }
  return out;
}

}  // namespace motionflow
