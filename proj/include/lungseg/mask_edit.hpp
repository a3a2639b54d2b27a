#pragma once

// Slice-plane brush strokes: rasterization, add/delete edits with sparse
// undo records, and seed strokes.
//
// In-plane pixel (u, v) of a slice maps to voxels as
//   axial    slice z:  (u, v) -> (u, v, z)
//   coronal  slice y:  (u, v) -> (u, y, v)
//   sagittal slice x:  (u, v) -> (x, u, v)

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lungseg/error.hpp"
#include "lungseg/seed_selection.hpp"
#include "lungseg/volume.hpp"

namespace lungseg {

enum class Plane { Axial, Coronal, Sagittal };
enum class StrokeMode { Add, Delete, SeedLeft, SeedRight };

inline std::string to_string(Plane p) {
  switch (p) {
    case Plane::Axial: return "axial";
    case Plane::Coronal: return "coronal";
    case Plane::Sagittal: return "sagittal";
  }
  return "axial";
}

inline std::string to_string(StrokeMode m) {
  switch (m) {
    case StrokeMode::Add: return "add";
    case StrokeMode::Delete: return "delete";
    case StrokeMode::SeedLeft: return "seed-left";
    case StrokeMode::SeedRight: return "seed-right";
  }
  return "add";
}

inline std::optional<Plane> parse_plane(std::string_view s) {
  if (s == "axial") return Plane::Axial;
  if (s == "coronal") return Plane::Coronal;
  if (s == "sagittal") return Plane::Sagittal;
  return std::nullopt;
}

inline std::optional<StrokeMode> parse_stroke_mode(std::string_view s) {
  if (s == "add") return StrokeMode::Add;
  if (s == "delete") return StrokeMode::Delete;
  if (s == "seed-left") return StrokeMode::SeedLeft;
  if (s == "seed-right") return StrokeMode::SeedRight;
  return std::nullopt;
}

struct Stroke {
  Plane plane = Plane::Axial;
  int slice_index = 0;
  std::vector<std::array<double, 2>> points;
  int radius_px = 0;
  StrokeMode mode = StrokeMode::Add;
};

struct VoxelChange {
  Coord coord;
  std::uint8_t previous = 0;
};

struct EditRecord {
  Stroke stroke;
  std::vector<VoxelChange> changed_voxels;
  std::uint64_t sequence = 0;
};

/// Width, height and slice count of a viewing plane.
struct PlaneExtent {
  int width;
  int height;
  int slices;
};

inline PlaneExtent plane_extent(const VolumeGeometry& g, Plane p) {
  switch (p) {
    case Plane::Axial: return {g.dims[0], g.dims[1], g.dims[2]};
    case Plane::Coronal: return {g.dims[0], g.dims[2], g.dims[1]};
    case Plane::Sagittal: return {g.dims[1], g.dims[2], g.dims[0]};
  }
  return {0, 0, 0};
}

inline Coord plane_to_voxel(Plane p, int slice, int u, int v) {
  switch (p) {
    case Plane::Axial: return {u, v, slice};
    case Plane::Coronal: return {u, slice, v};
    case Plane::Sagittal: return {slice, u, v};
  }
  return {};
}

namespace detail {

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

/// Liang-Barsky clip of segment a-b to [lo, hi]^2 box; false when disjoint.
inline bool clip_segment(std::array<double, 2>& a, std::array<double, 2>& b, std::array<double, 2> lo,
                         std::array<double, 2> hi) {
  double t0 = 0.0, t1 = 1.0;
  const double d[2] = {b[0] - a[0], b[1] - a[1]};
  for (int k = 0; k < 2; ++k) {
    const double p[2] = {-d[k], d[k]};
    const double q[2] = {a[k] - lo[k], hi[k] - a[k]};
    for (int s = 0; s < 2; ++s) {
      if (p[s] == 0.0) {
        if (q[s] < 0) return false;
      } else {
        const double t = q[s] / p[s];
        if (p[s] < 0) t0 = std::max(t0, t);
        else t1 = std::min(t1, t);
      }
    }
  }
  if (t0 > t1) return false;
  const std::array<double, 2> a0 = a;
  a = {a0[0] + t0 * d[0], a0[1] + t0 * d[1]};
  b = {a0[0] + t1 * d[0], a0[1] + t1 * d[1]};
  return true;
}

}  // namespace detail

inline void validate_stroke(const Stroke& stroke, const VolumeGeometry& g) {
  const PlaneExtent ext = plane_extent(g, stroke.plane);
  if (stroke.slice_index < 0 || stroke.slice_index >= ext.slices) {
    throw Error(ErrorCode::InvalidStroke, "slice_index outside the plane's range");
  }
  if (stroke.points.empty()) throw Error(ErrorCode::InvalidStroke, "stroke needs at least one point");
  if (stroke.radius_px < 0) throw Error(ErrorCode::InvalidStroke, "radius_px must be >= 0");
  for (const auto& p : stroke.points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw Error(ErrorCode::InvalidStroke, "non-finite stroke point");
  }
}

/// Voxels covered by the stroke: a Euclidean disc of radius_px stamped at
/// every point and at half-pixel steps along each segment, clipped to the
/// slice. Returned in grid index order.
inline std::vector<Coord> rasterize_stroke(const Stroke& stroke, const VolumeGeometry& g) {
  validate_stroke(stroke, g);
  const PlaneExtent ext = plane_extent(g, stroke.plane);
  const int r = stroke.radius_px;
  std::vector<std::array<int, 2>> disc;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du)
      if (du * du + dv * dv <= r * r) disc.push_back({du, dv});

  std::vector<std::uint8_t> hit(static_cast<std::size_t>(ext.width) * static_cast<std::size_t>(ext.height), 0);
  auto stamp = [&](double u, double v) {
    const int cu = detail::round_half_up(u), cv = detail::round_half_up(v);
    for (const auto& o : disc) {
      const int pu = cu + o[0], pv = cv + o[1];
      if (pu < 0 || pv < 0 || pu >= ext.width || pv >= ext.height) continue;
      hit[static_cast<std::size_t>(pu) + static_cast<std::size_t>(ext.width) * static_cast<std::size_t>(pv)] = 1;
    }
  };

  const std::array<double, 2> lo{-r - 1.0, -r - 1.0};
  const std::array<double, 2> hi{ext.width + r + 1.0, ext.height + r + 1.0};
  const auto& pts = stroke.points;
  for (const auto& p : pts) {
    if (p[0] >= lo[0] && p[1] >= lo[1] && p[0] <= hi[0] && p[1] <= hi[1]) stamp(p[0], p[1]);
  }
  for (std::size_t k = 1; k < pts.size(); ++k) {
    auto a = pts[k - 1];
    auto b = pts[k];
    if (!detail::clip_segment(a, b, lo, hi)) continue;
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const auto steps = static_cast<std::size_t>(std::ceil(len / 0.5));
    for (std::size_t s = 0; s <= steps; ++s) {
      const double t = steps == 0 ? 0.0 : static_cast<double>(s) / static_cast<double>(steps);
      stamp(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
    }
  }

  std::vector<Coord> voxels;
  for (int v = 0; v < ext.height; ++v)
    for (int u = 0; u < ext.width; ++u)
      if (hit[static_cast<std::size_t>(u) + static_cast<std::size_t>(ext.width) * static_cast<std::size_t>(v)])
        voxels.push_back(plane_to_voxel(stroke.plane, stroke.slice_index, u, v));
  std::sort(voxels.begin(), voxels.end(),
            [&](const Coord& a, const Coord& b) { return g.index(a) < g.index(b); });
  return voxels;
}

/// Applies an add/delete stroke in place and returns the flipped voxels.
inline EditRecord apply_stroke_in_place(BinaryMask& mask, const Stroke& stroke) {
  if (stroke.mode != StrokeMode::Add && stroke.mode != StrokeMode::Delete) {
    throw Error(ErrorCode::WrongMode, "seed strokes do not edit the mask");
  }
  EditRecord record;
  record.stroke = stroke;
  const std::uint8_t target = stroke.mode == StrokeMode::Add ? 1 : 0;
  for (const Coord& c : rasterize_stroke(stroke, mask.geometry)) {
    auto& bit = mask.at(c);
    if (bit != target) {
      record.changed_voxels.push_back({c, bit});
      bit = target;
    }
  }
  return record;
}

inline std::pair<BinaryMask, EditRecord> apply_stroke(const BinaryMask& mask, const Stroke& stroke) {
  BinaryMask edited = mask;
  EditRecord record = apply_stroke_in_place(edited, stroke);
  return {std::move(edited), std::move(record)};
}

inline void undo_in_place(BinaryMask& mask, const EditRecord& record) {
  for (const auto& change : record.changed_voxels) mask.at(change.coord) = change.previous;
}

inline BinaryMask undo(const BinaryMask& mask, const EditRecord& record) {
  BinaryMask restored = mask;
  undo_in_place(restored, record);
  return restored;
}

/// Seed strokes become the seed list of their side.
inline SeedSet seeds_from_stroke(const Stroke& stroke, const VolumeGeometry& g) {
  if (stroke.mode != StrokeMode::SeedLeft && stroke.mode != StrokeMode::SeedRight) {
    throw Error(ErrorCode::WrongMode, "only seed-left / seed-right strokes produce seeds");
  }
  SeedSet seeds;
  seeds.provenance = SeedProvenance::ManualStroke;
  (stroke.mode == StrokeMode::SeedLeft ? seeds.left : seeds.right) = rasterize_stroke(stroke, g);
  return seeds;
}

/// Undo stack for one mask. Records must be undone newest first.
class EditHistory {
 public:
  const EditRecord& apply(BinaryMask& mask, const Stroke& stroke) {
    EditRecord record = apply_stroke_in_place(mask, stroke);
    record.sequence = ++last_sequence_;
    records_.push_back(std::move(record));
    return records_.back();
  }

  /// Reverts the newest record; nullopt when nothing is left to undo.
  std::optional<EditRecord> undo_last(BinaryMask& mask) {
    if (records_.empty()) return std::nullopt;
    EditRecord record = std::move(records_.back());
    records_.pop_back();
    undo_in_place(mask, record);
    return record;
  }

  void undo(BinaryMask& mask, const EditRecord& record) {
    if (records_.empty() || records_.back().sequence != record.sequence) {
      throw Error(ErrorCode::StaleRecord, "only the most recent edit can be undone");
    }
    undo_last(mask);
  }

  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

 private:
  std::vector<EditRecord> records_;
  std::uint64_t last_sequence_ = 0;
};

}  // namespace lungseg
