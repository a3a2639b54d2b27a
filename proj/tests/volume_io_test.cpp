#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include "lungseg/volume_io.hpp"
#include "test_support.hpp"

using namespace lungseg;
using lungseg::testing::TempDir;

namespace {

// Hand-rolled ANALYZE 7.5 header so the reader is checked against bytes
// that did not come from our own encoder.
struct RawHeader {
  std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(348, 0);
  bool big_endian = false;

  template <typename T>
  void put(std::size_t offset, T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if (big_endian) std::reverse(buf, buf + sizeof(T));
    std::memcpy(bytes.data() + offset, buf, sizeof(T));
  }
};

RawHeader analyze_header(std::array<int, 3> dims, std::array<float, 3> spacing, std::int16_t datatype,
                         bool big_endian) {
  RawHeader h;
  h.big_endian = big_endian;
  h.put<std::int32_t>(0, 348);
  h.put<std::int16_t>(40, 3);
  for (int a = 0; a < 3; ++a) h.put<std::int16_t>(42 + 2 * a, static_cast<std::int16_t>(dims[a]));
  h.put<std::int16_t>(70, datatype);
  for (int a = 0; a < 3; ++a) h.put<float>(80 + 4 * a, spacing[a]);
  return h;
}

template <typename T>
std::vector<std::uint8_t> raw_values(const std::vector<T>& values, bool big_endian) {
  std::vector<std::uint8_t> out;
  for (T v : values) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if (big_endian) std::reverse(buf, buf + sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
  }
  return out;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Single-file int16 NIfTI with the given calibration.
std::vector<std::uint8_t> calibrated_nifti(const std::vector<std::int16_t>& raw, float slope, float inter) {
  const auto g = lungseg::testing::cube_geometry(static_cast<int>(raw.size()), 1, 1);
  auto bytes = io::encode_nifti(g, io::DataType::Int16, raw_values(raw, false));
  std::memcpy(bytes.data() + 112, &slope, 4);
  std::memcpy(bytes.data() + 116, &inter, 4);
  return bytes;
}

}  // namespace

TEST(WorldExtent, UnitSpacing) {
  const auto e = world_extent(lungseg::testing::cube_geometry(64, 64, 64));
  EXPECT_DOUBLE_EQ(e.voxel_volume_mm3, 1.0);
  EXPECT_EQ(e.physical_dims_mm, (Vec3{64, 64, 64}));
}

TEST(WorldExtent, AnisotropicSpacing) {
  const auto e = world_extent(lungseg::testing::cube_geometry(512, 512, 400, {0.7, 0.7, 1.25}));
  EXPECT_NEAR(e.voxel_volume_mm3, 0.6125, 1e-12);
  EXPECT_NEAR(e.physical_dims_mm[0], 358.4, 1e-9);
  EXPECT_NEAR(e.physical_dims_mm[1], 358.4, 1e-9);
  EXPECT_NEAR(e.physical_dims_mm[2], 500.0, 1e-9);
}

TEST(WorldExtent, SingleVoxel) {
  const auto e = world_extent(lungseg::testing::cube_geometry(1, 1, 1, {2, 2, 2.5}));
  EXPECT_DOUBLE_EQ(e.voxel_volume_mm3, 10.0);
  EXPECT_EQ(e.physical_dims_mm, (Vec3{2, 2, 2.5}));
}

TEST(LoadVolume, PhantomFileGeometry) {
  TempDir dir;
  const auto ph = generate_thorax_phantom(lungseg::testing::phantom_spec(64, 0, 1));
  io::save_volume(ph.volume, dir.file("ct.nii.gz"));
  const HUVolume v = io::load_volume(dir.file("ct.nii.gz"));
  EXPECT_EQ(v.geometry.dims, (std::array<int, 3>{64, 64, 64}));
  EXPECT_DOUBLE_EQ(v.geometry.voxel_volume_mm3(), 1.0);
  EXPECT_EQ(v.values, ph.volume.values);
  EXPECT_EQ(v.geometry.axis_codes(), (std::array<char, 3>{'R', 'A', 'S'}));
}

TEST(LoadVolume, LinearCalibration) {
  TempDir dir;
  write_bytes(dir.file("cal.nii"), calibrated_nifti({100, 0, -7}, 1.0f, -1024.0f));
  const HUVolume v = io::load_volume(dir.file("cal.nii"));
  EXPECT_FLOAT_EQ(v.values[0], -924.0f);
  EXPECT_FLOAT_EQ(v.values[1], -1024.0f);
  EXPECT_FLOAT_EQ(v.values[2], -1031.0f);
}

TEST(LoadVolume, IdentityCalibrationAndZeroSlope) {
  TempDir dir;
  write_bytes(dir.file("id.nii"), calibrated_nifti({100, -3}, 1.0f, 0.0f));
  write_bytes(dir.file("zero.nii"), calibrated_nifti({100, -3}, 0.0f, 55.0f));
  EXPECT_EQ(io::load_volume(dir.file("id.nii")).values, (std::vector<float>{100, -3}));
  EXPECT_EQ(io::load_volume(dir.file("zero.nii")).values, (std::vector<float>{100, -3}));
}

TEST(LoadVolume, CalibrationIsAffine) {
  TempDir dir;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> raw(-2000, 2000);
  std::uniform_real_distribution<float> coef(-3.0f, 3.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<std::int16_t> values = {static_cast<std::int16_t>(raw(rng)), static_cast<std::int16_t>(raw(rng)),
                                              static_cast<std::int16_t>(raw(rng))};
    float slope = coef(rng);
    if (slope == 0.0f) slope = 1.0f;
    const float inter = coef(rng) * 100.0f;
    write_bytes(dir.file("a.nii"), calibrated_nifti(values, slope, inter));
    const HUVolume v = io::load_volume(dir.file("a.nii"));
    for (std::size_t i = 0; i < values.size(); ++i) {
      EXPECT_NEAR(v.values[i], static_cast<double>(slope) * values[i] + inter, 1e-3);
    }
  }
}

TEST(LoadVolume, AllZeroHeaderIsCorrupt) {
  TempDir dir;
  write_bytes(dir.file("zero.nii"), std::vector<std::uint8_t>(400, 0));
  try {
    io::load_volume(dir.file("zero.nii"));
    FAIL() << "expected CorruptHeader";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptHeader);
  }
}

TEST(LoadVolume, NegativeSpacingIsAbsolute) {
  TempDir dir;
  auto h = analyze_header({2, 2, 2}, {-1.5f, 1.0f, 1.0f}, 2, false);
  write_bytes(dir.file("s.hdr"), h.bytes);
  write_bytes(dir.file("s.img"), std::vector<std::uint8_t>(8, 1));
  EXPECT_DOUBLE_EQ(io::load_volume(dir.file("s.hdr")).geometry.spacing[0], 1.5);
}

TEST(LoadVolume, ZeroSpacingIsCorrupt) {
  TempDir dir;
  auto h = analyze_header({2, 2, 2}, {1.0f, 0.0f, 1.0f}, 2, false);
  write_bytes(dir.file("s.hdr"), h.bytes);
  write_bytes(dir.file("s.img"), std::vector<std::uint8_t>(8, 1));
  try {
    io::load_volume(dir.file("s.hdr"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptHeader);
  }
}

TEST(LoadVolume, MissingFile) {
  try {
    io::load_volume("/nonexistent/dir/ct.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}

TEST(LoadVolume, UnknownMagicIsUnsupported) {
  TempDir dir;
  std::vector<std::uint8_t> junk(600, 0x5a);
  write_bytes(dir.file("junk.bin"), junk);
  try {
    io::load_volume(dir.file("junk.bin"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedFormat);
  }
}

TEST(LoadVolume, UnsupportedDatatype) {
  TempDir dir;
  auto bytes = io::encode_nifti(lungseg::testing::cube_geometry(2, 1, 1), io::DataType::UInt8, std::vector<std::uint8_t>(16));
  const std::int16_t float64 = 64;
  std::memcpy(bytes.data() + 70, &float64, 2);
  write_bytes(dir.file("f64.nii"), bytes);
  try {
    io::load_volume(dir.file("f64.nii"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedFormat);
  }
}

TEST(LoadVolume, AnalyzePairLittleAndBigEndian) {
  TempDir dir;
  const std::vector<std::int16_t> values = {-1000, -550, 0, 700, 12, -3, 1, 2};
  for (bool big : {false, true}) {
    auto h = analyze_header({2, 2, 2}, {0.5f, 0.75f, 2.0f}, 4, big);
    const std::string stem = big ? "be" : "le";
    write_bytes(dir.file(stem + ".hdr"), h.bytes);
    write_bytes(dir.file(stem + ".img"), raw_values(values, big));
    for (const std::string& open : {stem + ".hdr", stem + ".img"}) {
      const HUVolume v = io::load_volume(dir.file(open));
      EXPECT_EQ(v.geometry.dims, (std::array<int, 3>{2, 2, 2}));
      EXPECT_EQ(v.geometry.spacing, (Vec3{0.5, 0.75, 2.0}));
      ASSERT_EQ(v.values.size(), values.size());
      for (std::size_t i = 0; i < values.size(); ++i) EXPECT_EQ(v.values[i], values[i]) << open;
    }
  }
}

TEST(LoadVolume, AllDatatypes) {
  TempDir dir;
  const auto g = lungseg::testing::cube_geometry(3, 1, 1);
  io::write_image(dir.file("u8.nii"), g, io::DataType::UInt8, raw_values<std::uint8_t>({0, 7, 255}, false));
  io::write_image(dir.file("i32.nii"), g, io::DataType::Int32, raw_values<std::int32_t>({-70000, 0, 70000}, false));
  io::write_image(dir.file("f32.nii"), g, io::DataType::Float32, raw_values<float>({-0.5f, 1e6f, 3.25f}, false));
  EXPECT_EQ(io::load_volume(dir.file("u8.nii")).values, (std::vector<float>{0, 7, 255}));
  EXPECT_EQ(io::load_volume(dir.file("i32.nii")).values, (std::vector<float>{-70000, 0, 70000}));
  EXPECT_EQ(io::load_volume(dir.file("f32.nii")).values, (std::vector<float>{-0.5f, 1e6f, 3.25f}));
}

TEST(LoadVolume, QuaternionOrientation) {
  // qform only: 180 degrees about z flips x and y.
  TempDir dir;
  auto bytes = io::encode_nifti(lungseg::testing::cube_geometry(2, 2, 2), io::DataType::UInt8, std::vector<std::uint8_t>(8));
  const std::int16_t one = 1, zero = 0;
  const float b = 0, c = 0, d = 1;
  std::memcpy(bytes.data() + 252, &one, 2);
  std::memcpy(bytes.data() + 254, &zero, 2);
  std::memcpy(bytes.data() + 256, &b, 4);
  std::memcpy(bytes.data() + 260, &c, 4);
  std::memcpy(bytes.data() + 264, &d, 4);
  write_bytes(dir.file("q.nii"), bytes);
  const HUVolume v = io::load_volume(dir.file("q.nii"));
  EXPECT_EQ(v.geometry.axis_codes(), (std::array<char, 3>{'L', 'P', 'S'}));
  EXPECT_FALSE(v.geometry.is_oblique());
}

TEST(LoadVolume, ObliqueOrientationWarns) {
  TempDir dir;
  auto g = lungseg::testing::cube_geometry(4, 4, 4);
  const double t = 0.3;
  g.direction = {{{std::cos(t), std::sin(t), 0}, {-std::sin(t), std::cos(t), 0}, {0, 0, 1}}};
  io::save_mask(BinaryMask(g), dir.file("obl.nii"));
  std::vector<std::string> warnings;
  const HUVolume v = io::load_volume(dir.file("obl.nii"), &warnings);
  EXPECT_TRUE(v.geometry.is_oblique());
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(v.geometry.axis_codes(), (std::array<char, 3>{'R', 'A', 'S'}));
}

TEST(SaveMask, EmptyMaskDataSection) {
  TempDir dir;
  io::save_mask(BinaryMask(lungseg::testing::cube_geometry(8, 8, 8)), dir.file("empty.nii"));
  const auto bytes = io::read_file(dir.file("empty.nii"));
  ASSERT_EQ(bytes.size(), 352u + 512u);
  EXPECT_TRUE(std::all_of(bytes.begin() + 352, bytes.end(), [](std::uint8_t b) { return b == 0; }));
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(bytes.data()) + 344, 4), std::string("n+1\0", 4));
  std::int16_t datatype;
  float slope, inter;
  std::memcpy(&datatype, bytes.data() + 70, 2);
  std::memcpy(&slope, bytes.data() + 112, 4);
  std::memcpy(&inter, bytes.data() + 116, 4);
  EXPECT_EQ(datatype, 2);
  EXPECT_EQ(slope, 1.0f);
  EXPECT_EQ(inter, 0.0f);
}

TEST(SaveMask, GzipChosenBySuffix) {
  TempDir dir;
  const BinaryMask m(lungseg::testing::cube_geometry(4, 4, 4));
  io::save_mask(m, dir.file("a.nii.gz"));
  io::save_mask(m, dir.file("b.nii"));
  EXPECT_TRUE(io::is_gzip(io::read_file(dir.file("a.nii.gz"))));
  EXPECT_FALSE(io::is_gzip(io::read_file(dir.file("b.nii"))));
}

TEST(SaveMask, UnwritablePath) {
  try {
    io::save_mask(BinaryMask(lungseg::testing::cube_geometry(2, 2, 2)), "/nonexistent/dir/m.nii");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}

TEST(SaveMask, TruthMaskRoundTripOverlapIsOne) {
  TempDir dir;
  const auto ph = generate_thorax_phantom(lungseg::testing::phantom_spec(48, 30, 4));
  io::save_mask(ph.truth_left, dir.file("truth.nii.gz"));
  const BinaryMask back = io::load_mask(dir.file("truth.nii.gz"));
  EXPECT_EQ(metrics::overlap_coefficient(back, ph.truth_left), 1.0);
}

TEST(SaveMask, RoundTripProperty) {
  TempDir dir;
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<int> dim(1, 24);
  std::uniform_real_distribution<double> sp(0.1, 5.0);
  std::uniform_real_distribution<double> fill(0.0, 1.0);
  const char* names[] = {"m.nii", "m.nii.gz", "m.hdr", "m.img.gz"};
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = lungseg::testing::cube_geometry(dim(rng), dim(rng), dim(rng), {sp(rng), sp(rng), sp(rng)});
    const BinaryMask m = lungseg::testing::random_mask(g, rng, fill(rng));
    const std::string path = dir.file(std::to_string(trial) + names[trial % 4]);
    io::save_mask(m, path);
    const BinaryMask back = io::load_mask(path);
    EXPECT_EQ(back.geometry.dims, g.dims);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(back.geometry.spacing[a], g.spacing[a], 1e-6);
    EXPECT_EQ(back.values, m.values);
  }
}

TEST(DecodeNifti, InMemoryGzip) {
  const auto ph = generate_thorax_phantom(lungseg::testing::phantom_spec(32, 10, 2));
  const auto mask_bytes = io::gzip(io::encode_mask(ph.truth_right));
  const HUVolume v = io::decode_nifti(mask_bytes);
  EXPECT_EQ(io::mask_from_volume(v).values, ph.truth_right.values);
}

TEST(MaskFromVolume, LabelSelection) {
  HUVolume v(lungseg::testing::cube_geometry(4, 1, 1), std::vector<float>{0, 1, 2, 2});
  EXPECT_EQ(io::mask_from_volume(v).values, (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(io::mask_from_volume(v, 2).values, (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(io::mask_from_volume(v, 1).values, (std::vector<std::uint8_t>{0, 1, 0, 0}));
}
