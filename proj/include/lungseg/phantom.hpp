#pragma once

// Synthetic thorax CT with exactly known lung masks.
//
// Layout, in fractions of the grid's physical extent E = dims * spacing and
// measured from the grid centre:
//   body   elliptic cylinder along z, semi-axes (0.48 Ex, 0.40 Ey)
//   lungs  ellipsoids with semi-axes (0.18 Ex, 0.28 Ey, 0.38 Ez), centred at
//          x = -/+ 0.22 Ex; the patient-left lung sits at low x (axis codes RAS)
//   ribs   eight 36-degree arcs of the body ellipse at normalised radius
//          [0.91, 0.97], in axial bands repeating every Ez / 16
// Lung voxels get lung_mean_hu plus i.i.d. Gaussian noise clamped to
// [air_hu, body_hu]; everything outside the body is air_hu.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "lungseg/error.hpp"
#include "lungseg/volume.hpp"

namespace lungseg {

struct PhantomSpec {
  std::array<int, 3> dims{64, 64, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  double lung_mean_hu = -550.0;
  double lung_noise_sd = 0.0;
  double body_hu = 0.0;
  double rib_hu = 700.0;
  double air_hu = -1000.0;
  std::uint64_t rng_seed = 0;
};

struct PhantomLayout {
  static constexpr double kBodySemiX = 0.48;
  static constexpr double kBodySemiY = 0.40;
  static constexpr Vec3 kLungSemiAxes{0.18, 0.28, 0.38};
  static constexpr double kLungOffsetX = 0.22;
  static constexpr double kRibInner = 0.91;
  static constexpr double kRibOuter = 0.97;
  static constexpr int kRibArcs = 8;
  static constexpr double kRibArcDegrees = 36.0;
  static constexpr int kRibBands = 16;
  static constexpr double kRibBandDuty = 0.6;

  /// Closed-form volume (mm^3) of one lung ellipsoid.
  static double lung_volume_mm3(const PhantomSpec& spec) {
    double v = 4.0 / 3.0 * std::numbers::pi;
    for (int a = 0; a < 3; ++a) v *= kLungSemiAxes[a] * spec.dims[a] * spec.spacing[a];
    return v;
  }
};

struct Phantom {
  HUVolume volume;
  BinaryMask truth_left;
  BinaryMask truth_right;
};

inline void validate(const PhantomSpec& spec) {
  for (int a = 0; a < 3; ++a) {
    if (spec.dims[a] < 32) throw Error(ErrorCode::InvalidSpec, "phantom dims must each be >= 32");
    if (!(spec.spacing[a] > 0.0) || !std::isfinite(spec.spacing[a])) {
      throw Error(ErrorCode::InvalidSpec, "phantom spacing must be positive");
    }
  }
  if (!(spec.lung_mean_hu < spec.body_hu && spec.body_hu < spec.rib_hu && spec.air_hu <= spec.lung_mean_hu)) {
    throw Error(ErrorCode::InvalidSpec, "phantom intensities must satisfy air <= lung < body < rib");
  }
  if (!(spec.lung_noise_sd >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise sd must be >= 0");
}

inline Phantom generate_thorax_phantom(const PhantomSpec& spec) {
  validate(spec);
  using L = PhantomLayout;

  VolumeGeometry g;
  g.dims = spec.dims;
  g.spacing = spec.spacing;

  Vec3 extent{};
  for (int a = 0; a < 3; ++a) extent[a] = spec.dims[a] * spec.spacing[a];
  auto centred = [&](int a, int i) { return (i - (spec.dims[a] - 1) / 2.0) * spec.spacing[a]; };

  const double body_a = L::kBodySemiX * extent[0];
  const double body_b = L::kBodySemiY * extent[1];
  const Vec3 lung_semi{L::kLungSemiAxes[0] * extent[0], L::kLungSemiAxes[1] * extent[1],
                       L::kLungSemiAxes[2] * extent[2]};
  const double left_cx = -L::kLungOffsetX * extent[0];
  const double right_cx = +L::kLungOffsetX * extent[0];
  const double band_period = extent[2] / L::kRibBands;
  const double arc_pitch = 360.0 / L::kRibArcs;

  Phantom out{HUVolume(g, static_cast<float>(spec.air_hu)), BinaryMask(g, "left-lung"), BinaryMask(g, "right-lung")};
  std::mt19937_64 rng(spec.rng_seed);
  std::normal_distribution<double> noise(0.0, spec.lung_noise_sd > 0 ? spec.lung_noise_sd : 1.0);

  auto inside_lung = [&](double px, double py, double pz, double cx) {
    const double dx = (px - cx) / lung_semi[0];
    const double dy = py / lung_semi[1];
    const double dz = pz / lung_semi[2];
    return dx * dx + dy * dy + dz * dz <= 1.0;
  };

  std::size_t i = 0;
  for (int z = 0; z < g.dims[2]; ++z) {
    const double pz = centred(2, z);
    const double band_phase = std::fmod((pz + extent[2] / 2.0) / band_period, 1.0);
    const bool rib_slice = band_phase < L::kRibBandDuty;
    for (int y = 0; y < g.dims[1]; ++y) {
      const double py = centred(1, y);
      for (int x = 0; x < g.dims[0]; ++x, ++i) {
        const double px = centred(0, x);
        const double u = px / body_a;
        const double v = py / body_b;
        const double rho = std::sqrt(u * u + v * v);
        if (rho > 1.0) continue;

        double hu = spec.body_hu;
        if (rib_slice && rho >= L::kRibInner && rho <= L::kRibOuter) {
          double deg = std::atan2(v, u) * 180.0 / std::numbers::pi + L::kRibArcDegrees / 2.0;
          deg = std::fmod(deg + 720.0, arc_pitch);
          if (deg < L::kRibArcDegrees) hu = spec.rib_hu;
        }
        const bool left = inside_lung(px, py, pz, left_cx);
        const bool right = !left && inside_lung(px, py, pz, right_cx);
        if (left || right) {
          hu = spec.lung_mean_hu;
          if (spec.lung_noise_sd > 0) hu = std::clamp(hu + noise(rng), spec.air_hu, spec.body_hu);
          (left ? out.truth_left : out.truth_right).values[i] = 1;
        }
        out.volume.values[i] = static_cast<float>(hu);
      }
    }
  }
  return out;
}

/// Mirrors a grid across the x midline (x -> nx - 1 - x).
template <typename T>
Grid<T> mirror_x(const Grid<T>& in) {
  Grid<T> out = in;
  const auto& d = in.geometry.dims;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) out.at({d[0] - 1 - x, y, z}) = in.at({x, y, z});
  return out;
}

}  // namespace lungseg
