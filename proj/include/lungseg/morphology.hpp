#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lungseg/volume.hpp"

namespace lungseg::morph {

struct Components {
  Grid<std::int32_t> labels;        // 0 = background, components numbered from 1 in scan order
  std::vector<std::size_t> sizes;   // sizes[k - 1] is the voxel count of component k
};

/// Connected components of the foreground. Labels follow the first voxel of
/// each component in index order, so the result does not depend on threads
/// or traversal details.
inline Components label_components(const BinaryMask& mask, int adjacency = 6) {
  const auto& g = mask.geometry;
  Components out{Grid<std::int32_t>(g, 0), {}};
  const auto offsets = neighbor_offsets(adjacency);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask.values[start] || out.labels.values[start] != 0) continue;
    const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
    std::size_t count = 0;
    out.labels.values[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++count;
      const Coord c = g.coord(i);
      for (const Coord& off : offsets) {
        const Coord n = c + off;
        if (!g.contains(n)) continue;
        const std::size_t j = g.index(n);
        if (mask.values[j] && out.labels.values[j] == 0) {
          out.labels.values[j] = label;
          stack.push_back(j);
        }
      }
    }
    out.sizes.push_back(count);
  }
  return out;
}

inline BinaryMask select_labels(const Components& comps, std::span<const std::int32_t> keep, std::string tag = {}) {
  std::vector<std::uint8_t> wanted(comps.sizes.size() + 1, 0);
  for (auto k : keep) {
    if (k > 0 && static_cast<std::size_t>(k) <= comps.sizes.size()) wanted[static_cast<std::size_t>(k)] = 1;
  }
  BinaryMask out(comps.labels.geometry, std::move(tag));
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = wanted[static_cast<std::size_t>(comps.labels.values[i])];
  return out;
}

/// Largest 6-connected component (lowest label on ties); empty when the mask is empty.
inline BinaryMask largest_component(const BinaryMask& mask) {
  const auto comps = label_components(mask, 6);
  if (comps.sizes.empty()) return BinaryMask(mask.geometry, mask.label);
  std::int32_t best = 1;
  for (std::size_t k = 1; k < comps.sizes.size(); ++k) {
    if (comps.sizes[k] > comps.sizes[static_cast<std::size_t>(best - 1)]) best = static_cast<std::int32_t>(k + 1);
  }
  const std::int32_t keep[] = {best};
  return select_labels(comps, keep, mask.label);
}

/// Fills background regions of each axial slice that are not 4-connected
/// to the slice border.
inline void fill_holes_axial(BinaryMask& mask) {
  const auto& g = mask.geometry;
  const int nx = g.dims[0], ny = g.dims[1];
  const std::size_t plane = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  std::vector<std::uint8_t> outside(plane);
  std::vector<std::size_t> stack;
  for (int z = 0; z < g.dims[2]; ++z) {
    std::uint8_t* slice = mask.values.data() + plane * static_cast<std::size_t>(z);
    std::fill(outside.begin(), outside.end(), 0);
    auto seed = [&](int x, int y) {
      const std::size_t k = static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * static_cast<std::size_t>(y);
      if (!slice[k] && !outside[k]) {
        outside[k] = 1;
        stack.push_back(k);
      }
    };
    for (int x = 0; x < nx; ++x) {
      seed(x, 0);
      seed(x, ny - 1);
    }
    for (int y = 0; y < ny; ++y) {
      seed(0, y);
      seed(nx - 1, y);
    }
    while (!stack.empty()) {
      const std::size_t k = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(k % static_cast<std::size_t>(nx));
      const int y = static_cast<int>(k / static_cast<std::size_t>(nx));
      if (x > 0) seed(x - 1, y);
      if (x + 1 < nx) seed(x + 1, y);
      if (y > 0) seed(x, y - 1);
      if (y + 1 < ny) seed(x, y + 1);
    }
    for (std::size_t k = 0; k < plane; ++k) {
      if (!outside[k]) slice[k] = 1;
    }
  }
}

/// Fills background not 6-connected to the grid boundary.
inline void fill_holes_3d(BinaryMask& mask) {
  const auto& g = mask.geometry;
  std::vector<std::uint8_t> outside(mask.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const Coord c = g.coord(i);
    const bool border = c.x == 0 || c.y == 0 || c.z == 0 || c.x == g.dims[0] - 1 || c.y == g.dims[1] - 1 ||
                        c.z == g.dims[2] - 1;
    if (border && !mask.values[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const Coord c = g.coord(i);
    for (const Coord& off : kFaceNeighbors) {
      const Coord n = c + off;
      if (!g.contains(n)) continue;
      const std::size_t j = g.index(n);
      if (!mask.values[j] && !outside[j]) {
        outside[j] = 1;
        stack.push_back(j);
      }
    }
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!outside[i]) mask.values[i] = 1;
  }
}

/// Number of foreground voxels whose six face neighbours are all foreground
/// (voxels beyond the grid count as background).
inline std::size_t eroded_count(const BinaryMask& mask) {
  const auto& g = mask.geometry;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.values[i]) continue;
    const Coord c = g.coord(i);
    bool interior = true;
    for (const Coord& off : kFaceNeighbors) {
      const Coord n = c + off;
      if (!g.contains(n) || !mask.values[g.index(n)]) {
        interior = false;
        break;
      }
    }
    count += interior;
  }
  return count;
}

}  // namespace lungseg::morph
