#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls compute_connectivity; the oracles only share the link-affinity
// function with the code under test.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lungseg/lungseg.hpp"

namespace lungseg::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lungseg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline VolumeGeometry cube_geometry(int nx, int ny, int nz, Vec3 spacing = {1, 1, 1}) {
  VolumeGeometry g;
  g.dims = {nx, ny, nz};
  g.spacing = spacing;
  return g;
}

inline HUVolume random_volume(const VolumeGeometry& g, std::mt19937_64& rng, double lo = -1000, double hi = 0) {
  HUVolume v(g);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& x : v.values) x = static_cast<float>(dist(rng));
  return v;
}

inline BinaryMask random_mask(const VolumeGeometry& g, std::mt19937_64& rng, double p = 0.5) {
  BinaryMask m(g);
  std::bernoulli_distribution bit(p);
  for (auto& b : m.values) b = bit(rng);
  return m;
}

inline BinaryMask full_mask(const VolumeGeometry& g) {
  BinaryMask m(g);
  std::fill(m.values.begin(), m.values.end(), 1);
  return m;
}

inline bool subset(const BinaryMask& a, const BinaryMask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.values[i] && !b.values[i]) return false;
  return true;
}

inline BinaryMask dilate6(const BinaryMask& m) {
  BinaryMask out = m;
  const auto& g = m.geometry;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m.values[i]) continue;
    const Coord c = g.coord(i);
    for (const Coord& off : kFaceNeighbors) {
      const Coord n = c + off;
      if (g.contains(n)) out.at(n) = 1;
    }
  }
  return out;
}

inline PhantomSpec phantom_spec(int size, double noise, std::uint64_t seed) {
  PhantomSpec spec;
  spec.dims = {size, size, size};
  spec.lung_noise_sd = noise;
  spec.rng_seed = seed;
  return spec;
}

/// Link weight between two voxel coordinates as the propagation sees it.
inline float link(const HUVolume& v, const AffinityParams& p, Coord a, Coord b) {
  return static_cast<float>(affinity(v, p, a, b));
}

struct Edge {
  std::size_t a;
  std::size_t b;
  float w;
};

inline std::vector<Edge> domain_edges(const HUVolume& v, const AffinityParams& p, const BinaryMask& domain) {
  std::vector<Edge> edges;
  const auto& g = v.geometry;
  const auto offsets = neighbor_offsets(p.adjacency);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!domain.values[i]) continue;
    const Coord c = g.coord(i);
    for (const Coord& off : offsets) {
      const Coord n = c + off;
      if (!g.contains(n)) continue;
      const std::size_t j = g.index(n);
      if (j <= i || !domain.values[j]) continue;
      edges.push_back({i, j, link(v, p, c, n)});
    }
  }
  return edges;
}

/// Bottleneck connectivity by threshold sweep: a voxel's strength is the
/// largest t for which it is reachable from a seed using only links >= t.
inline std::vector<float> threshold_sweep_oracle(const HUVolume& v, const std::vector<Coord>& seeds,
                                                 const AffinityParams& p, const BinaryMask& domain) {
  const auto edges = domain_edges(v, p, domain);
  std::vector<float> levels;
  for (const auto& e : edges) levels.push_back(e.w);
  levels.push_back(1.0f);
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  std::vector<std::vector<std::pair<std::size_t, float>>> adj(v.size());
  for (const auto& e : edges) {
    adj[e.a].push_back({e.b, e.w});
    adj[e.b].push_back({e.a, e.w});
  }
  std::vector<float> strength(v.size(), 0.0f);
  std::vector<std::uint8_t> reached(v.size(), 0);
  for (float t : levels) {
    if (t <= 0.0f) break;
    std::vector<std::uint8_t> seen(v.size(), 0);
    std::vector<std::size_t> stack;
    for (const Coord& s : seeds) {
      const std::size_t i = v.geometry.index(s);
      if (!seen[i]) {
        seen[i] = 1;
        stack.push_back(i);
      }
    }
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (const auto& [j, w] : adj[i]) {
        if (w >= t && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (seen[i] && !reached[i]) {
        reached[i] = 1;
        strength[i] = t;
      }
    }
  }
  return strength;
}

/// Max over every simple path from every seed of the path's weakest link,
/// by exhaustive depth-first enumeration. Exponential: tiny grids only.
inline std::vector<float> all_simple_paths_oracle(const HUVolume& v, const std::vector<Coord>& seeds,
                                                  const AffinityParams& p, const BinaryMask& domain) {
  const auto& g = v.geometry;
  const auto offsets = neighbor_offsets(p.adjacency);
  std::vector<float> best(v.size(), 0.0f);
  std::vector<std::uint8_t> on_path(v.size(), 0);
  std::function<void(std::size_t, float)> walk = [&](std::size_t i, float bottleneck) {
    best[i] = std::max(best[i], bottleneck);
    on_path[i] = 1;
    const Coord c = g.coord(i);
    for (const Coord& off : offsets) {
      const Coord n = c + off;
      if (!g.contains(n)) continue;
      const std::size_t j = g.index(n);
      if (on_path[j] || !domain.values[j]) continue;
      walk(j, std::min(bottleneck, link(v, p, c, n)));
    }
    on_path[i] = 0;
  };
  for (const Coord& s : seeds) walk(g.index(s), 1.0f);
  return best;
}

/// Depth-first search over simple paths that abandons a path as soon as it
/// cannot beat the best value already recorded at its end voxel. The pruning
/// never discards an optimal value, so the result equals full enumeration.
inline std::vector<float> pruned_simple_paths_oracle(const HUVolume& v, const std::vector<Coord>& seeds,
                                                     const AffinityParams& p, const BinaryMask& domain) {
  const auto& g = v.geometry;
  const auto offsets = neighbor_offsets(p.adjacency);
  std::vector<float> best(v.size(), 0.0f);
  std::vector<std::uint8_t> on_path(v.size(), 0);
  std::vector<std::uint8_t> visited(v.size(), 0);
  std::function<void(std::size_t, float)> walk = [&](std::size_t i, float bottleneck) {
    if (visited[i] && bottleneck <= best[i]) return;
    visited[i] = 1;
    best[i] = bottleneck;
    on_path[i] = 1;
    const Coord c = g.coord(i);
    for (const Coord& off : offsets) {
      const Coord n = c + off;
      if (!g.contains(n)) continue;
      const std::size_t j = g.index(n);
      if (on_path[j] || !domain.values[j]) continue;
      walk(j, std::min(bottleneck, link(v, p, c, n)));
    }
    on_path[i] = 0;
  };
  for (const Coord& s : seeds) walk(g.index(s), 1.0f);
  return best;
}

/// True when K(c) = max over neighbours d of min(K(d), affinity(d, c)) at
/// every non-seed voxel of the domain, and K = 1 at the seeds.
inline bool is_connectivity_fixpoint(const HUVolume& v, const std::vector<Coord>& seeds, const AffinityParams& p,
                                     const BinaryMask& domain, const std::vector<float>& k) {
  const auto& g = v.geometry;
  std::vector<std::uint8_t> is_seed(v.size(), 0);
  for (const Coord& s : seeds) is_seed[g.index(s)] = 1;
  const auto offsets = neighbor_offsets(p.adjacency);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!domain.values[i]) {
      if (k[i] != 0.0f) return false;
      continue;
    }
    if (is_seed[i]) {
      if (k[i] != 1.0f) return false;
      continue;
    }
    float expected = 0.0f;
    const Coord c = g.coord(i);
    for (const Coord& off : offsets) {
      const Coord n = c + off;
      if (!g.contains(n) || !domain.at(n)) continue;
      expected = std::max(expected, std::min(k[g.index(n)], link(v, p, n, c)));
    }
    if (k[i] != expected) return false;
  }
  return true;
}

}  // namespace lungseg::testing
