#pragma once

// Automatic lung seed localization: body and rib-cage markers, the strict
// parenchyma threshold band, and the minimum-HU rule within the most robust
// candidate region of each lung.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lungseg/error.hpp"
#include "lungseg/morphology.hpp"
#include "lungseg/volume.hpp"

namespace lungseg {

inline constexpr double kBodyThresholdHu = -500.0;
inline constexpr double kBoneThresholdHu = 200.0;
inline constexpr double kParenchymaLowHu = -700.0;
inline constexpr double kParenchymaHighHu = -400.0;
inline constexpr double kPlausibleSeedLowHu = -1000.0;
inline constexpr double kPlausibleSeedHighHu = -300.0;
inline constexpr std::size_t kMaxSeedsPerSide = 8;

enum class Side { Left, Right };

inline std::string to_string(Side s) { return s == Side::Left ? "left" : "right"; }

enum class SeedProvenance { Automatic, ManualClick, ManualStroke };

inline std::string to_string(SeedProvenance p) {
  switch (p) {
    case SeedProvenance::Automatic: return "automatic";
    case SeedProvenance::ManualClick: return "manual-click";
    case SeedProvenance::ManualStroke: return "manual-stroke";
  }
  return "automatic";
}

struct SeedSet {
  std::vector<Coord> left;
  std::vector<Coord> right;
  SeedProvenance provenance = SeedProvenance::Automatic;
  std::vector<std::string> warnings;

  const std::vector<Coord>& side(Side s) const { return s == Side::Left ? left : right; }
  std::vector<Coord>& side(Side s) { return s == Side::Left ? left : right; }
};

struct CandidateRegion {
  BinaryMask mask;
  Side side = Side::Left;
  std::size_t voxel_count = 0;
  float min_hu = 0.0f;
  std::vector<Coord> min_hu_locations;  // lexicographic (x, y, z) order
  Vec3 centroid{};
};

inline Vec3 centroid(const BinaryMask& mask) {
  Vec3 sum{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.values[i]) continue;
    const Coord c = mask.geometry.coord(i);
    sum[0] += c.x;
    sum[1] += c.y;
    sum[2] += c.z;
    ++n;
  }
  if (n == 0) return sum;
  return {sum[0] / n, sum[1] / n, sum[2] / n};
}

/// Patient body: HU > -500, largest 6-connected component, cavities filled
/// per axial slice and then in 3-D.
inline BinaryMask extract_body_mask(const HUVolume& volume) {
  BinaryMask above(volume.geometry, "body");
  for (std::size_t i = 0; i < volume.size(); ++i) above.values[i] = volume.values[i] > kBodyThresholdHu;
  BinaryMask body = morph::largest_component(above);
  if (static_cast<double>(body.count()) < 0.01 * static_cast<double>(volume.size())) {
    throw Error(ErrorCode::NoBodyFound, "largest component above -500 HU covers less than 1% of the grid");
  }
  morph::fill_holes_axial(body);
  morph::fill_holes_3d(body);
  body.label = "body";
  return body;
}

/// Bone voxels (HU >= +200) inside the body.
inline BinaryMask extract_rib_cage(const HUVolume& volume, const BinaryMask& body) {
  require_same_grid(volume.geometry, body.geometry, "extract_rib_cage");
  BinaryMask ribs(volume.geometry, "ribs");
  for (std::size_t i = 0; i < volume.size(); ++i) {
    ribs.values[i] = body.values[i] && volume.values[i] >= kBoneThresholdHu;
  }
  return ribs;
}

namespace detail {

struct Point2 {
  double x;
  double y;
  friend auto operator<=>(const Point2&, const Point2&) = default;
};

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

/// Voxels a lung candidate may occupy: inside the convex hull of the bone
/// voxels of its axial slice. Slices whose bone voxels have no 2-D hull
/// (fewer than three, or all collinear) impose no constraint.
inline BinaryMask rib_hull_region(const BinaryMask& ribs) {
  const auto& g = ribs.geometry;
  BinaryMask allowed(g, "rib-hull");
  const int nx = g.dims[0], ny = g.dims[1];
  std::vector<detail::Point2> pts;
  for (int z = 0; z < g.dims[2]; ++z) {
    pts.clear();
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x)
        if (ribs.at({x, y, z})) pts.push_back({static_cast<double>(x), static_cast<double>(y)});
    const auto hull = pts.size() >= 3 ? detail::convex_hull(pts) : std::vector<detail::Point2>{};
    if (hull.size() < 3) {
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) allowed.at({x, y, z}) = 1;
      continue;
    }
    constexpr double eps = 1e-9;
    for (int y = 0; y < ny; ++y) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t e = 0; e < hull.size(); ++e) {
        const auto& a = hull[e];
        const auto& b = hull[(e + 1) % hull.size()];
        if (y < std::min(a.y, b.y) - eps || y > std::max(a.y, b.y) + eps) continue;
        if (a.y == b.y) {
          lo = std::min({lo, a.x, b.x});
          hi = std::max({hi, a.x, b.x});
        } else {
          const double t = (y - a.y) / (b.y - a.y);
          const double xi = a.x + t * (b.x - a.x);
          lo = std::min(lo, xi);
          hi = std::max(hi, xi);
        }
      }
      if (lo > hi) continue;
      const int x0 = std::max(0, static_cast<int>(std::ceil(lo - eps)));
      const int x1 = std::min(nx - 1, static_cast<int>(std::floor(hi + eps)));
      for (int x = x0; x <= x1; ++x) allowed.at({x, y, z}) = 1;
    }
  }
  return allowed;
}

inline std::size_t candidate_size_floor(const VolumeGeometry& g) {
  const auto fraction = static_cast<std::size_t>(std::ceil(1e-4 * static_cast<double>(g.voxel_count())));
  return std::max<std::size_t>(1000, fraction);
}

/// Connected components of the parenchyma band [-700, -400] HU inside the
/// body and the rib hull, at least `candidate_size_floor` voxels each,
/// largest first.
inline std::vector<CandidateRegion> candidate_regions(const HUVolume& volume, const BinaryMask& body,
                                                      const BinaryMask& ribs) {
  require_same_grid(volume.geometry, body.geometry, "candidate_regions");
  require_same_grid(volume.geometry, ribs.geometry, "candidate_regions");
  const auto& g = volume.geometry;
  const BinaryMask allowed = rib_hull_region(ribs);
  BinaryMask band(g);
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const float hu = volume.values[i];
    band.values[i] = body.values[i] && allowed.values[i] && hu >= kParenchymaLowHu && hu <= kParenchymaHighHu;
  }
  const auto comps = morph::label_components(band, 6);
  const std::size_t floor = candidate_size_floor(g);

  const LateralAxis lateral = lateral_axis(g);
  const double body_leftness = lateral.leftness(centroid(body)[lateral.axis]);

  std::vector<CandidateRegion> regions;
  for (std::size_t k = 0; k < comps.sizes.size(); ++k) {
    if (comps.sizes[k] < floor) continue;
    const std::int32_t keep[] = {static_cast<std::int32_t>(k + 1)};
    CandidateRegion r;
    r.mask = morph::select_labels(comps, keep, "candidate");
    r.voxel_count = comps.sizes[k];
    r.min_hu = std::numeric_limits<float>::infinity();
    Vec3 sum{0, 0, 0};
    for (std::size_t i = 0; i < r.mask.size(); ++i) {
      if (!r.mask.values[i]) continue;
      const Coord c = g.coord(i);
      sum[0] += c.x;
      sum[1] += c.y;
      sum[2] += c.z;
      const float hu = volume.values[i];
      if (hu < r.min_hu) {
        r.min_hu = hu;
        r.min_hu_locations.clear();
      }
      if (hu == r.min_hu) r.min_hu_locations.push_back(c);
    }
    const double n = static_cast<double>(r.voxel_count);
    r.centroid = {sum[0] / n, sum[1] / n, sum[2] / n};
    std::sort(r.min_hu_locations.begin(), r.min_hu_locations.end());
    r.side = lateral.leftness(r.centroid[lateral.axis]) > body_leftness ? Side::Left : Side::Right;
    r.mask.label = to_string(r.side) + "-candidate";
    regions.push_back(std::move(r));
  }
  if (regions.empty()) {
    throw Error(ErrorCode::NoCandidateRegion, "no parenchyma-band component reaches the size floor");
  }
  std::stable_sort(regions.begin(), regions.end(), [](const CandidateRegion& a, const CandidateRegion& b) {
    if (a.voxel_count != b.voxel_count) return a.voxel_count > b.voxel_count;
    return a.centroid < b.centroid;
  });
  return regions;
}

/// One seed list per side: the minimum-HU voxels (up to eight, lexicographic)
/// of the side's most robust region, i.e. the region with the most voxels
/// surviving one 6-neighbourhood erosion.
inline SeedSet select_seeds(const std::vector<CandidateRegion>& regions) {
  if (regions.empty()) throw Error(ErrorCode::NoCandidateRegion, "no candidate regions");
  SeedSet seeds;
  seeds.provenance = SeedProvenance::Automatic;
  for (Side side : {Side::Left, Side::Right}) {
    const CandidateRegion* best = nullptr;
    std::size_t best_eroded = 0;
    for (const auto& r : regions) {
      if (r.side != side) continue;
      const std::size_t eroded = morph::eroded_count(r.mask);
      const bool better = best == nullptr || eroded > best_eroded ||
                          (eroded == best_eroded && (r.voxel_count > best->voxel_count ||
                                                     (r.voxel_count == best->voxel_count && r.centroid < best->centroid)));
      if (better) {
        best = &r;
        best_eroded = eroded;
      }
    }
    if (best == nullptr) {
      throw Error(ErrorCode::MissingSide, "no candidate region on the " + to_string(side) + " side", to_string(side));
    }
    const std::size_t n = std::min(kMaxSeedsPerSide, best->min_hu_locations.size());
    seeds.side(side).assign(best->min_hu_locations.begin(), best->min_hu_locations.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return seeds;
}

/// Bounds check for user-supplied seeds; implausible intensities are noted
/// in `warnings` but accepted.
inline SeedSet validate_manual_seeds(const HUVolume& volume, SeedSet seeds) {
  for (Side side : {Side::Left, Side::Right}) {
    for (const Coord& c : seeds.side(side)) {
      if (!volume.geometry.contains(c)) {
        throw Error(ErrorCode::OutOfBounds, to_string(side) + " seed (" + std::to_string(c.x) + "," +
                                                std::to_string(c.y) + "," + std::to_string(c.z) +
                                                ") lies outside the volume");
      }
      const float hu = volume.at(c);
      if (hu < kPlausibleSeedLowHu || hu > kPlausibleSeedHighHu) {
        seeds.warnings.push_back(to_string(side) + " seed (" + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                                 std::to_string(c.z) + ") has " + std::to_string(hu) +
                                 " HU, outside the plausible parenchyma range [-1000, -300]");
      }
    }
  }
  return seeds;
}

struct AutoSeedResult {
  SeedSet seeds;
  BinaryMask body;
  std::vector<CandidateRegion> regions;
};

/// Markers, threshold band and seed rule in one call.
inline AutoSeedResult auto_seeds(const HUVolume& volume) {
  AutoSeedResult out;
  out.body = extract_body_mask(volume);
  const BinaryMask ribs = extract_rib_cage(volume, out.body);
  out.regions = candidate_regions(volume, out.body, ribs);
  out.seeds = select_seeds(out.regions);
  return out;
}

}  // namespace lungseg
