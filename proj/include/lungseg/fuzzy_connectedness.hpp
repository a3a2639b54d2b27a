#pragma once

// Absolute fuzzy connectedness. Link affinity is a Gaussian of the pair-mean
// intensity around the parenchyma mean; connectivity of a voxel is the best
// (max over paths) weakest link (min over the path) back to any seed,
// computed by best-first propagation that finalizes each voxel once.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "lungseg/error.hpp"
#include "lungseg/morphology.hpp"
#include "lungseg/seed_selection.hpp"
#include "lungseg/volume.hpp"

namespace lungseg {

struct AffinityParams {
  double mean_hu = -550.0;
  double sigma_hu = 150.0;
  int adjacency = 6;

  friend bool operator==(const AffinityParams&, const AffinityParams&) = default;
};

inline constexpr double kDefaultTheta = 0.5;

inline void validate(const AffinityParams& p) {
  if (!std::isfinite(p.mean_hu)) throw Error(ErrorCode::InvalidParams, "mean must be finite");
  if (!(p.sigma_hu > 0.0) || !std::isfinite(p.sigma_hu)) throw Error(ErrorCode::InvalidParams, "sigma must be > 0");
  if (p.adjacency != 6 && p.adjacency != 26) throw Error(ErrorCode::InvalidParams, "adjacency must be 6 or 26");
}

inline void validate_theta(double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) throw Error(ErrorCode::InvalidTheta, "theta must lie in (0, 1]");
}

/// Affinity of two adjacent voxels with intensities `a` and `b`.
inline double affinity_value(double a, double b, const AffinityParams& p) {
  const double d = (a + b) / 2.0 - p.mean_hu;
  return std::exp(-(d * d) / (2.0 * p.sigma_hu * p.sigma_hu));
}

inline bool adjacent(Coord c, Coord d, int adjacency) {
  const int dx = std::abs(c.x - d.x), dy = std::abs(c.y - d.y), dz = std::abs(c.z - d.z);
  if (adjacency == 6) return dx + dy + dz == 1;
  return std::max({dx, dy, dz}) == 1;
}

/// Affinity between voxels `c` and `d`: zero unless adjacent, one for c == d.
inline double affinity(const HUVolume& volume, const AffinityParams& params, Coord c, Coord d) {
  if (!volume.geometry.contains(c) || !volume.geometry.contains(d)) {
    throw Error(ErrorCode::OutOfBounds, "affinity coordinates outside the volume");
  }
  if (c == d) return 1.0;
  if (!adjacent(c, d, params.adjacency)) return 0.0;
  return affinity_value(volume.at(c), volume.at(d), params);
}

/// The link weight the propagation uses, stored at scene precision.
inline float link_strength(float a, float b, const AffinityParams& p) {
  return static_cast<float>(affinity_value(a, b, p));
}

/// Per-voxel connectivity in [0, 1] relative to one seed list.
using ConnectivityScene = Grid<float>;

struct FcOptions {
  /// Salts the order in which equal-strength heap entries pop. The scene
  /// is the same for every salt; tests use this to exercise that.
  std::optional<std::uint64_t> tie_salt;
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

inline ConnectivityScene compute_connectivity(const HUVolume& volume, std::span<const Coord> seeds,
                                              const AffinityParams& params, const BinaryMask& domain,
                                              const FcOptions& options = {}) {
  validate(params);
  require_same_grid(volume.geometry, domain.geometry, "compute_connectivity");
  const auto& g = volume.geometry;
  if (seeds.empty()) throw Error(ErrorCode::SeedOutsideDomain, "no seeds given");
  for (const Coord& s : seeds) {
    if (!g.contains(s) || !domain.at(s)) {
      throw Error(ErrorCode::SeedOutsideDomain, "seed (" + std::to_string(s.x) + "," + std::to_string(s.y) + "," +
                                                    std::to_string(s.z) + ") lies outside the segmentation domain");
    }
  }

  ConnectivityScene scene(g, 0.0f);
  std::vector<std::uint8_t> done(volume.size(), 0);

  struct Entry {
    float strength;
    std::uint64_t order;
    std::size_t index;
    bool operator<(const Entry& o) const {
      if (strength != o.strength) return strength < o.strength;
      return order > o.order;
    }
  };
  auto order_of = [&](std::size_t index) -> std::uint64_t {
    if (!options.tie_salt) return index;
    std::uint64_t h = index ^ *options.tie_salt;  // splitmix64
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
  };

  std::priority_queue<Entry> heap;
  for (const Coord& s : seeds) {
    const std::size_t i = g.index(s);
    scene.values[i] = 1.0f;
    heap.push({1.0f, order_of(i), i});
  }

  const auto offsets = neighbor_offsets(params.adjacency);
  std::size_t pops = 0;
  while (!heap.empty()) {
    const Entry top = heap.top();
    heap.pop();
    if (done[top.index]) continue;
    done[top.index] = 1;
    if (options.deadline && (++pops & 0xffff) == 0 && std::chrono::steady_clock::now() > *options.deadline) {
      throw Error(ErrorCode::Timeout, "connectivity computation exceeded its deadline");
    }
    const Coord c = g.coord(top.index);
    const float here = scene.values[top.index];
    const float fc = volume.values[top.index];
    for (const Coord& off : offsets) {
      const Coord n = c + off;
      if (!g.contains(n)) continue;
      const std::size_t j = g.index(n);
      if (done[j] || !domain.values[j]) continue;
      const float candidate = std::min(here, link_strength(fc, volume.values[j], params));
      if (candidate > scene.values[j]) {
        scene.values[j] = candidate;
        heap.push({candidate, order_of(j), j});
      }
    }
  }
  return scene;
}

inline BinaryMask threshold_scene(const ConnectivityScene& scene, double theta) {
  validate_theta(theta);
  BinaryMask mask(scene.geometry);
  for (std::size_t i = 0; i < scene.size(); ++i) mask.values[i] = scene.values[i] >= theta;
  return mask;
}

/// Restricts to the body, keeps the 6-connected components holding a seed and
/// fills enclosed holes on each axial slice.
inline BinaryMask postprocess_mask(const BinaryMask& raw, std::span<const Coord> seeds, const BinaryMask& body) {
  require_same_grid(raw.geometry, body.geometry, "postprocess_mask");
  BinaryMask clipped(raw.geometry, raw.label);
  for (std::size_t i = 0; i < raw.size(); ++i) clipped.values[i] = raw.values[i] && body.values[i];
  const auto comps = morph::label_components(clipped, 6);
  std::vector<std::int32_t> keep;
  for (const Coord& s : seeds) {
    if (!raw.geometry.contains(s)) continue;
    const auto label = comps.labels.at(s);
    if (label > 0) keep.push_back(label);
  }
  if (keep.empty()) throw Error(ErrorCode::EmptyResult, "no mask component contains a seed");
  BinaryMask out = morph::select_labels(comps, keep, raw.label);
  morph::fill_holes_axial(out);
  return out;
}

struct FcResult {
  BinaryMask left_mask;
  BinaryMask right_mask;
  BinaryMask combined_mask;
  ConnectivityScene left_scene;
  ConnectivityScene right_scene;
  BinaryMask body;
  SeedSet seeds;
  AffinityParams params;
  double theta = kDefaultTheta;
};

/// Per-side label map: 1 = right lung, 2 = left lung, 0 = background.
inline Grid<std::uint8_t> side_labels(const FcResult& r) {
  Grid<std::uint8_t> labels(r.combined_mask.geometry, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels.values[i] = r.left_mask.values[i] ? 2 : (r.right_mask.values[i] ? 1 : 0);
  }
  return labels;
}

/// Both lungs from validated seeds. The body mask is computed unless given.
inline FcResult segment_lungs(const HUVolume& volume, const SeedSet& seeds, const AffinityParams& params,
                              double theta, const BinaryMask* body = nullptr, const FcOptions& options = {}) {
  validate(params);
  validate_theta(theta);
  for (Side side : {Side::Left, Side::Right}) {
    if (seeds.side(side).empty()) {
      throw Error(ErrorCode::MissingSide, "no " + to_string(side) + " seed", to_string(side));
    }
  }
  FcResult result;
  result.body = body ? *body : extract_body_mask(volume);
  result.seeds = seeds;
  result.params = params;
  result.theta = theta;

  auto run_side = [&](Side side) -> std::pair<ConnectivityScene, BinaryMask> {
    try {
      ConnectivityScene scene = compute_connectivity(volume, seeds.side(side), params, result.body, options);
      BinaryMask raw = threshold_scene(scene, theta);
      BinaryMask mask = postprocess_mask(raw, seeds.side(side), result.body);
      mask.label = to_string(side) + "-lung";
      return {std::move(scene), std::move(mask)};
    } catch (const Error& e) {
      if (!e.side().empty()) throw;
      throw Error(e.code(), to_string(side) + " lung: " + e.what(), to_string(side));
    }
  };
  auto left = std::async(std::launch::async, run_side, Side::Left);
  auto right_result = run_side(Side::Right);
  auto left_result = left.get();

  result.left_scene = std::move(left_result.first);
  result.left_mask = std::move(left_result.second);
  result.right_scene = std::move(right_result.first);
  result.right_mask = std::move(right_result.second);
  result.combined_mask = BinaryMask(volume.geometry, "combined");
  for (std::size_t i = 0; i < volume.size(); ++i) {
    result.combined_mask.values[i] = result.left_mask.values[i] | result.right_mask.values[i];
  }
  return result;
}

/// Automatic seeds followed by FC, sharing one body mask.
inline FcResult segment_auto(const HUVolume& volume, const AffinityParams& params = {},
                             double theta = kDefaultTheta, const FcOptions& options = {}) {
  validate(params);
  validate_theta(theta);
  AutoSeedResult seeds = auto_seeds(volume);
  return segment_lungs(volume, seeds.seeds, params, theta, &seeds.body, options);
}

}  // namespace lungseg
