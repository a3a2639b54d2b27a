#include <gtest/gtest.h>
#include <zlib.h>

#include "lungseg/render.hpp"
#include "test_support.hpp"

using namespace lungseg;
using namespace lungseg::testing;

namespace {

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

struct DecodedPng {
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

// Minimal reader for the subset the encoder emits: 8-bit RGB, filter 0.
DecodedPng decode_png(const std::vector<std::uint8_t>& png) {
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  EXPECT_TRUE(std::equal(sig, sig + 8, png.begin()));
  DecodedPng out;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 12 <= png.size()) {
    const std::uint32_t len = be32(&png[pos]);
    const std::string type(reinterpret_cast<const char*>(&png[pos + 4]), 4);
    const std::uint8_t* data = &png[pos + 8];
    const auto crc = crc32(0L, &png[pos + 4], len + 4);
    EXPECT_EQ(be32(&png[pos + 8 + len]), static_cast<std::uint32_t>(crc)) << type;
    if (type == "IHDR") {
      out.width = be32(data);
      out.height = be32(data + 4);
      EXPECT_EQ(data[8], 8);
      EXPECT_EQ(data[9], 2);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    }
    pos += 12 + len;
    if (type == "IEND") break;
  }
  EXPECT_EQ(pos, png.size());
  uLongf raw_size = (3 * out.width + 1) * out.height;
  std::vector<std::uint8_t> raw(raw_size);
  EXPECT_EQ(uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())), Z_OK);
  for (std::uint32_t v = 0; v < out.height; ++v) {
    EXPECT_EQ(raw[v * (3 * out.width + 1)], 0);
    const auto* row = &raw[v * (3 * out.width + 1) + 1];
    out.rgb.insert(out.rgb.end(), row, row + 3 * out.width);
  }
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

}  // namespace

TEST(WindowLevel, Examples) {
  EXPECT_EQ(render::window_level(-500, -500, 1400), 128);
  EXPECT_EQ(render::window_level(-1200, -500, 1400), 0);
  EXPECT_EQ(render::window_level(-2000, -500, 1400), 0);
  EXPECT_EQ(render::window_level(200, -500, 1400), 255);
  EXPECT_EQ(render::window_level(3000, -500, 1400), 255);
}

TEST(RenderSlice, DimensionsPerPlane) {
  const HUVolume v(cube_geometry(20, 30, 40), 0.0f);
  const auto axial = render::render_slice(v, nullptr, Plane::Axial, 0, -500, 1400, false);
  const auto coronal = render::render_slice(v, nullptr, Plane::Coronal, 29, -500, 1400, false);
  const auto sagittal = render::render_slice(v, nullptr, Plane::Sagittal, 19, -500, 1400, false);
  EXPECT_EQ(std::make_pair(axial.width, axial.height), std::make_pair(20, 30));
  EXPECT_EQ(std::make_pair(coronal.width, coronal.height), std::make_pair(20, 40));
  EXPECT_EQ(std::make_pair(sagittal.width, sagittal.height), std::make_pair(30, 40));
  const HUVolume cube(cube_geometry(64, 64, 64), 0.0f);
  const auto img = render::render_slice(cube, nullptr, Plane::Axial, 0, -500, 1400, false);
  EXPECT_EQ(img.width, 64);
  EXPECT_EQ(img.height, 64);
}

TEST(RenderSlice, PixelsFollowVoxelMapping) {
  std::mt19937_64 rng(6);
  const auto g = cube_geometry(7, 8, 9);
  const HUVolume v = random_volume(g, rng, -1200, 400);
  for (Plane p : {Plane::Axial, Plane::Coronal, Plane::Sagittal}) {
    const auto ext = plane_extent(g, p);
    const int index = ext.slices / 2;
    const auto img = render::render_slice(v, nullptr, p, index, -500, 1400, false);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        EXPECT_EQ(img.gray(x, y), render::window_level(v.at(plane_to_voxel(p, index, x, y)), -500, 1400));
  }
}

TEST(RenderSlice, OverlayOnEmptyMaskIsIdentity) {
  const auto ph = generate_thorax_phantom(phantom_spec(32, 20, 1));
  const BinaryMask empty(ph.volume.geometry);
  const auto off = render::render_slice(ph.volume, &empty, Plane::Coronal, 16, -500, 1400, false);
  const auto on = render::render_slice(ph.volume, &empty, Plane::Coronal, 16, -500, 1400, true);
  EXPECT_EQ(on.rgb, off.rgb);
  EXPECT_EQ(render::encode_png(on), render::encode_png(off));
}

TEST(RenderSlice, OverlayBlendsBlueOnMaskOnly) {
  const auto ph = generate_thorax_phantom(phantom_spec(32, 0, 0));
  const auto plain = render::render_slice(ph.volume, nullptr, Plane::Axial, 16, -500, 1400, false);
  const auto blended = render::render_slice(ph.volume, &ph.truth_left, Plane::Axial, 16, -500, 1400, true);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const std::size_t i = 3 * (static_cast<std::size_t>(y) * 32 + x);
      const int g = plain.rgb[i];
      if (ph.truth_left.at({x, y, 16})) {
        EXPECT_EQ(blended.rgb[i], static_cast<int>(std::floor(0.6 * g + 0.5)));
        EXPECT_EQ(blended.rgb[i + 1], static_cast<int>(std::floor(0.6 * g + 0.5)));
        EXPECT_EQ(blended.rgb[i + 2], static_cast<int>(std::floor(0.6 * g + 0.4 * 255 + 0.5)));
      } else {
        EXPECT_EQ(blended.rgb[i], g);
        EXPECT_EQ(blended.rgb[i + 2], g);
      }
    }
  }
}

TEST(RenderSlice, Errors) {
  const HUVolume v(cube_geometry(8, 8, 8), 0.0f);
  EXPECT_EQ(code_of([&] { render::render_slice(v, nullptr, Plane::Axial, 8, -500, 1400, false); }),
            ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { render::render_slice(v, nullptr, Plane::Axial, -1, -500, 1400, false); }),
            ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { render::render_slice(v, nullptr, Plane::Axial, 0, -500, 0, false); }),
            ErrorCode::InvalidWindow);
  EXPECT_EQ(code_of([&] { render::render_slice(v, nullptr, Plane::Axial, 0, -500, -5, false); }),
            ErrorCode::InvalidWindow);
}

TEST(EncodePng, DecodesToSamePixels) {
  std::mt19937_64 rng(11);
  const HUVolume v = random_volume(cube_geometry(13, 7, 3), rng, -1200, 400);
  const BinaryMask m = random_mask(v.geometry, rng, 0.3);
  const auto img = render::render_slice(v, &m, Plane::Axial, 1, -500, 1400, true);
  const auto decoded = decode_png(render::encode_png(img));
  EXPECT_EQ(decoded.width, 13u);
  EXPECT_EQ(decoded.height, 7u);
  EXPECT_EQ(decoded.rgb, img.rgb);
}
