#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lungseg/error.hpp"
#include "lungseg/mask_edit.hpp"
#include "lungseg/volume.hpp"

namespace lungseg::render {

/// 8-bit RGB raster, rows top to bottom.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t gray(int u, int v) const { return rgb[3 * (static_cast<std::size_t>(v) * width + u)]; }
};

inline constexpr double kOverlayOpacity = 0.4;

/// Window/level: clamp((hu - (center - width/2)) / width, 0, 1) * 255,
/// rounded half up.
inline std::uint8_t window_level(float hu, double center, double width) {
  double t = (static_cast<double>(hu) - (center - width / 2.0)) / width;
  t = std::clamp(t, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(t * 255.0 + 0.5));
}

/// One plane of the volume, optionally with the mask blended in blue at 40%.
/// The image is width x height of the plane (see `plane_extent`).
inline Image render_slice(const HUVolume& volume, const BinaryMask* mask, Plane plane, int index, double window_center,
                          double window_width, bool overlay) {
  if (!(window_width > 0.0) || !std::isfinite(window_width) || !std::isfinite(window_center)) {
    throw Error(ErrorCode::InvalidWindow, "window width must be a positive finite number");
  }
  const PlaneExtent ext = plane_extent(volume.geometry, plane);
  if (index < 0 || index >= ext.slices) {
    throw Error(ErrorCode::IndexOutOfRange, to_string(plane) + " index " + std::to_string(index) + " outside [0, " +
                                                std::to_string(ext.slices) + ")");
  }
  Image img{ext.width, ext.height, std::vector<std::uint8_t>(3 * static_cast<std::size_t>(ext.width) * ext.height)};
  const bool blend = overlay && mask != nullptr;
  for (int v = 0; v < ext.height; ++v) {
    for (int u = 0; u < ext.width; ++u) {
      const Coord c = plane_to_voxel(plane, index, u, v);
      const std::uint8_t g = window_level(volume.at(c), window_center, window_width);
      std::uint8_t* px = &img.rgb[3 * (static_cast<std::size_t>(v) * ext.width + u)];
      px[0] = px[1] = px[2] = g;
      if (blend && mask->at(c)) {
        const double keep = 1.0 - kOverlayOpacity;
        px[0] = static_cast<std::uint8_t>(std::floor(keep * g + 0.5));
        px[1] = px[0];
        px[2] = static_cast<std::uint8_t>(std::floor(keep * g + kOverlayOpacity * 255.0 + 0.5));
      }
    }
  }
  return img;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> raw;
  raw.reserve((3 * static_cast<std::size_t>(img.width) + 1) * img.height);
  for (int v = 0; v < img.height; ++v) {
    raw.push_back(0);
    const auto* row = img.rgb.data() + 3 * static_cast<std::size_t>(v) * img.width;
    raw.insert(raw.end(), row, row + 3 * static_cast<std::size_t>(img.width));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error(ErrorCode::IoError, "PNG compression failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  detail::put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  detail::put_chunk(png, "IHDR", ihdr);
  detail::put_chunk(png, "IDAT", packed);
  detail::put_chunk(png, "IEND", {});
  return png;
}

}  // namespace lungseg::render
