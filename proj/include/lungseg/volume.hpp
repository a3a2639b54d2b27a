#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lungseg/error.hpp"

namespace lungseg {

/// Integer voxel index (x, y, z). Ordered lexicographically on (x, y, z).
struct Coord {
  int x = 0;
  int y = 0;
  int z = 0;

  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

  friend auto operator<=>(const Coord&, const Coord&) = default;
  friend Coord operator+(Coord a, Coord b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
};

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

inline constexpr Mat3 kIdentityDirection{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

/// Grid geometry. `direction[a]` is the unit world (RAS+) vector that voxel
/// axis `a` points along; world(c) = origin + sum_a c[a] * spacing[a] * direction[a].
struct VolumeGeometry {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  Mat3 direction = kIdentityDirection;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }

  double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }

  bool valid() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) return false;
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) return false;
    }
    return true;
  }

  bool contains(Coord c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims[0] && c.y < dims[1] && c.z < dims[2];
  }

  std::size_t index(Coord c) const {
    return static_cast<std::size_t>(c.x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(c.y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(c.z));
  }

  Coord coord(std::size_t index) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(index % nx), static_cast<int>((index / nx) % ny), static_cast<int>(index / (nx * ny))};
  }

  /// Anatomical label ('R','L','A','P','S','I') of the direction each voxel
  /// axis increases toward, taken from the dominant world component.
  std::array<char, 3> axis_codes() const {
    std::array<char, 3> codes{};
    for (int a = 0; a < 3; ++a) {
      const auto& d = direction[a];
      int dominant = 0;
      for (int w = 1; w < 3; ++w) {
        if (std::abs(d[w]) > std::abs(d[dominant])) dominant = w;
      }
      static constexpr char positive[] = {'R', 'A', 'S'};
      static constexpr char negative[] = {'L', 'P', 'I'};
      codes[a] = d[dominant] >= 0 ? positive[dominant] : negative[dominant];
    }
    return codes;
  }

  /// True when some axis has an off-dominant component above 10% of its
  /// dominant component.
  bool is_oblique() const {
    for (int a = 0; a < 3; ++a) {
      const auto& d = direction[a];
      double dominant = std::max({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])});
      for (int w = 0; w < 3; ++w) {
        double v = std::abs(d[w]);
        if (v != dominant && v > 0.1 * dominant) return true;
      }
    }
    return false;
  }

  friend bool operator==(const VolumeGeometry&, const VolumeGeometry&) = default;
};

struct WorldExtent {
  double voxel_volume_mm3 = 0.0;
  Vec3 physical_dims_mm{};
};

inline WorldExtent world_extent(const VolumeGeometry& g) {
  return {g.voxel_volume_mm3(),
          {g.dims[0] * g.spacing[0], g.dims[1] * g.spacing[1], g.dims[2] * g.spacing[2]}};
}

/// Voxel axis carrying the patient left-right direction and the sign that
/// makes `sign * c[axis]` grow toward the patient's left.
struct LateralAxis {
  int axis = 0;
  int sign = -1;

  double leftness(double coordinate_along_axis) const { return sign * coordinate_along_axis; }
};

inline LateralAxis lateral_axis(const VolumeGeometry& g) {
  const auto codes = g.axis_codes();
  for (int a = 0; a < 3; ++a) {
    if (codes[a] == 'L') return {a, +1};
    if (codes[a] == 'R') return {a, -1};
  }
  return {0, -1};
}

/// Dense scalar grid. Voxel (x, y, z) lives at x + nx * (y + ny * z).
template <typename T>
struct Grid {
  VolumeGeometry geometry;
  std::vector<T> values;

  Grid() = default;
  explicit Grid(VolumeGeometry g, T fill = T{}) : geometry(g), values(g.voxel_count(), fill) {}
  Grid(VolumeGeometry g, std::vector<T> v) : geometry(g), values(std::move(v)) {
    if (values.size() != geometry.voxel_count()) {
      throw Error(ErrorCode::GeometryMismatch, "value count does not match dims");
    }
  }

  std::size_t size() const { return values.size(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }
  T& at(Coord c) { return values[geometry.index(c)]; }
  const T& at(Coord c) const { return values[geometry.index(c)]; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Calibrated CT intensities in Hounsfield units.
using HUVolume = Grid<float>;

/// 0/1 annotation congruent with its source volume.
struct BinaryMask : Grid<std::uint8_t> {
  std::string label;

  BinaryMask() = default;
  explicit BinaryMask(VolumeGeometry g, std::string tag = {}) : Grid<std::uint8_t>(g, 0), label(std::move(tag)) {}
  BinaryMask(VolumeGeometry g, std::vector<std::uint8_t> bits, std::string tag = {})
      : Grid<std::uint8_t>(g, std::move(bits)), label(std::move(tag)) {}

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
  }
  bool empty() const { return std::none_of(values.begin(), values.end(), [](auto b) { return b != 0; }); }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.geometry == b.geometry && a.values == b.values;
  }
};

inline void require_same_grid(const VolumeGeometry& a, const VolumeGeometry& b, const char* what) {
  if (a.dims != b.dims) {
    throw Error(ErrorCode::GeometryMismatch, std::string(what) + ": grid dimensions differ");
  }
}

inline constexpr std::array<Coord, 6> kFaceNeighbors{{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};

inline std::vector<Coord> neighbor_offsets(int adjacency) {
  if (adjacency == 6) return {kFaceNeighbors.begin(), kFaceNeighbors.end()};
  std::vector<Coord> offsets;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx != 0 || dy != 0 || dz != 0) offsets.push_back({dx, dy, dz});
  return offsets;
}

}  // namespace lungseg
