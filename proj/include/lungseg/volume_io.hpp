#pragma once

// NIfTI-1 (single .nii and .hdr/.img pair) and ANALYZE 7.5 reading, NIfTI-1
// writing. Gzip is sniffed on read and chosen by the ".gz" suffix on write.

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lungseg/error.hpp"
#include "lungseg/volume.hpp"

namespace lungseg::io {

using Bytes = std::vector<std::uint8_t>;

enum class DataType : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
};

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kSingleFileOffset = 352;

// ---------------------------------------------------------------------------
// gzip
// ---------------------------------------------------------------------------

inline bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline Bytes gunzip(std::span<const std::uint8_t> input) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(ErrorCode::IoError, "inflateInit2 failed");
  Bytes out;
  std::uint8_t buffer[1 << 16];
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = static_cast<uInt>(input.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buffer;
    zs.avail_out = sizeof(buffer);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(ErrorCode::UnsupportedFormat, "corrupt gzip stream");
    }
    out.insert(out.end(), buffer, buffer + (sizeof(buffer) - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Error(ErrorCode::UnsupportedFormat, "truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

inline Bytes gzip(std::span<const std::uint8_t> input, int level = 6) {
  z_stream zs{};
  if (deflateInit2(&zs, level, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorCode::IoError, "deflateInit2 failed");
  }
  Bytes out(deflateBound(&zs, static_cast<uLong>(input.size())) + 32);
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::IoError, "gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline Bytes read_file(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, "file not found: " + path);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open: " + path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

inline Bytes read_maybe_gzip(const std::string& path) {
  Bytes raw = read_file(path);
  return is_gzip(raw) ? gunzip(raw) : raw;
}

// ---------------------------------------------------------------------------
// header
// ---------------------------------------------------------------------------

namespace detail {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T value;
    std::memcpy(&value, bytes_.data() + offset, sizeof(T));
    if (swap_) value = byteswap_value(value);
    return value;
  }

  std::string chars(std::size_t offset, std::size_t n) const {
    return {reinterpret_cast<const char*>(bytes_.data() + offset), n};
  }

  template <typename T>
  static T byteswap_value(T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

class HeaderWriter {
 public:
  explicit HeaderWriter(Bytes& bytes) : bytes_(bytes) {}
  template <typename T>
  void put(std::size_t offset, T value) {
    std::memcpy(bytes_.data() + offset, &value, sizeof(T));
  }
  void chars(std::size_t offset, std::string_view s) { std::memcpy(bytes_.data() + offset, s.data(), s.size()); }

 private:
  Bytes& bytes_;
};

}  // namespace detail

enum class Container { SingleFile, Pair, Analyze };

struct Header {
  Container container = Container::SingleFile;
  bool swap = false;
  VolumeGeometry geometry;
  DataType datatype = DataType::UInt8;
  double vox_offset = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
};

inline std::size_t bytes_per_voxel(DataType t) {
  switch (t) {
    case DataType::UInt8: return 1;
    case DataType::Int16: return 2;
    case DataType::Int32: return 4;
    case DataType::Float32: return 4;
  }
  return 0;
}

/// Parses a 348-byte header. `extension_hint` is used only when the magic
/// bytes are absent.
inline Header parse_header(std::span<const std::uint8_t> bytes, std::optional<Container> extension_hint) {
  using detail::HeaderReader;
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::UnsupportedFormat, "file shorter than a 348-byte header");
  }
  Header h;
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  if (sizeof_hdr == 348) {
    h.swap = false;
  } else if (HeaderReader::byteswap_value(sizeof_hdr) == 348) {
    h.swap = true;
  }
  HeaderReader r(bytes, h.swap);

  const std::string magic = r.chars(344, 4);
  if (magic == std::string("n+1\0", 4)) {
    h.container = Container::SingleFile;
  } else if (magic == std::string("ni1\0", 4)) {
    h.container = Container::Pair;
  } else if (sizeof_hdr == 348 || h.swap) {
    h.container = Container::Analyze;
  } else if (extension_hint) {
    h.container = *extension_hint;
  } else {
    throw Error(ErrorCode::UnsupportedFormat, "no NIfTI/ANALYZE magic");
  }

  const auto ndim = r.get<std::int16_t>(40);
  if (ndim < 1 || ndim > 7) throw Error(ErrorCode::CorruptHeader, "dim[0] out of range");
  auto& g = h.geometry;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = a < ndim ? r.get<std::int16_t>(42 + 2 * a) : 1;
    if (g.dims[a] < 1) throw Error(ErrorCode::CorruptHeader, "nonpositive dimension");
  }
  for (int a = 3; a < ndim; ++a) {
    if (r.get<std::int16_t>(42 + 2 * a) > 1) throw Error(ErrorCode::UnsupportedFormat, "4-D volumes are not supported");
  }
  for (int a = 0; a < 3; ++a) {
    double s = a < ndim ? std::abs(static_cast<double>(r.get<float>(80 + 4 * a))) : 1.0;
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::CorruptHeader, "nonpositive voxel spacing");
    g.spacing[a] = s;
  }

  const auto dt = r.get<std::int16_t>(70);
  switch (dt) {
    case 2: case 4: case 8: case 16: h.datatype = static_cast<DataType>(dt); break;
    default: throw Error(ErrorCode::UnsupportedFormat, "unsupported datatype " + std::to_string(dt));
  }

  h.vox_offset = r.get<float>(108);
  h.slope = r.get<float>(112);
  h.intercept = r.get<float>(116);
  if (!std::isfinite(h.slope)) h.slope = 0.0;
  if (!std::isfinite(h.intercept)) h.intercept = 0.0;

  if (h.container != Container::Analyze) {
    const auto qform_code = r.get<std::int16_t>(252);
    const auto sform_code = r.get<std::int16_t>(254);
    if (sform_code > 0) {
      for (int a = 0; a < 3; ++a) {
        Vec3 column{r.get<float>(280 + 4 * a), r.get<float>(296 + 4 * a), r.get<float>(312 + 4 * a)};
        double norm = std::sqrt(column[0] * column[0] + column[1] * column[1] + column[2] * column[2]);
        if (norm > 0) {
          for (int w = 0; w < 3; ++w) g.direction[a][w] = column[w] / norm;
        }
      }
      g.origin = {r.get<float>(292), r.get<float>(308), r.get<float>(324)};
    } else if (qform_code > 0) {
      double b = r.get<float>(256), c = r.get<float>(260), d = r.get<float>(264);
      double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
      double qfac = r.get<float>(76) < 0 ? -1.0 : 1.0;
      const double rot[3][3] = {
          {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
          {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
          {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
      for (int col = 0; col < 3; ++col) {
        for (int w = 0; w < 3; ++w) g.direction[col][w] = rot[w][col] * (col == 2 ? qfac : 1.0);
      }
      g.origin = {r.get<float>(268), r.get<float>(272), r.get<float>(276)};
    }
  }
  return h;
}

inline Bytes encode_header(const VolumeGeometry& g, DataType datatype, Container container) {
  Bytes bytes(kHeaderSize, 0);
  detail::HeaderWriter w(bytes);
  w.put<std::int32_t>(0, 348);
  w.put<char>(38, 'r');
  w.put<std::int16_t>(40, 3);
  for (int a = 0; a < 3; ++a) w.put<std::int16_t>(42 + 2 * a, static_cast<std::int16_t>(g.dims[a]));
  for (int a = 3; a < 7; ++a) w.put<std::int16_t>(42 + 2 * a, 1);
  w.put<std::int16_t>(70, static_cast<std::int16_t>(datatype));
  w.put<std::int16_t>(72, static_cast<std::int16_t>(8 * bytes_per_voxel(datatype)));
  w.put<float>(76, 1.0f);
  for (int a = 0; a < 3; ++a) w.put<float>(80 + 4 * a, static_cast<float>(g.spacing[a]));
  w.put<float>(108, container == Container::SingleFile ? static_cast<float>(kSingleFileOffset) : 0.0f);
  w.put<float>(112, 1.0f);
  w.put<float>(116, 0.0f);
  w.put<char>(123, 2);  // mm
  w.put<std::int16_t>(252, 0);
  w.put<std::int16_t>(254, 1);
  for (int row = 0; row < 3; ++row) {
    for (int a = 0; a < 3; ++a) {
      w.put<float>(280 + 16 * row + 4 * a, static_cast<float>(g.direction[a][row] * g.spacing[a]));
    }
    w.put<float>(280 + 16 * row + 12, static_cast<float>(g.origin[row]));
  }
  w.chars(344, container == Container::SingleFile ? std::string_view("n+1\0", 4) : std::string_view("ni1\0", 4));
  return bytes;
}

// ---------------------------------------------------------------------------
// decoding
// ---------------------------------------------------------------------------

inline HUVolume decode_data(const Header& h, std::span<const std::uint8_t> data) {
  const std::size_t n = h.geometry.voxel_count();
  const std::size_t bpv = bytes_per_voxel(h.datatype);
  if (data.size() < n * bpv) throw Error(ErrorCode::CorruptHeader, "data section shorter than dims imply");
  HUVolume vol(h.geometry);
  const bool calibrate = h.slope != 0.0;
  auto store = [&](std::size_t i, double raw) {
    vol.values[i] = static_cast<float>(calibrate ? h.slope * raw + h.intercept : raw);
  };
  const std::uint8_t* p = data.data();
  for (std::size_t i = 0; i < n; ++i, p += bpv) {
    switch (h.datatype) {
      case DataType::UInt8: store(i, *p); break;
      case DataType::Int16: {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        if (h.swap) v = detail::HeaderReader::byteswap_value(v);
        store(i, v);
        break;
      }
      case DataType::Int32: {
        std::int32_t v;
        std::memcpy(&v, p, 4);
        if (h.swap) v = detail::HeaderReader::byteswap_value(v);
        store(i, v);
        break;
      }
      case DataType::Float32: {
        float v;
        std::memcpy(&v, p, 4);
        if (h.swap) v = detail::HeaderReader::byteswap_value(v);
        store(i, v);
        break;
      }
    }
  }
  for (float v : vol.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::CorruptHeader, "non-finite voxel value");
  }
  return vol;
}

/// Decodes an in-memory single-file NIfTI-1 image (gzip allowed).
inline HUVolume decode_nifti(std::span<const std::uint8_t> input) {
  Bytes plain;
  if (is_gzip(input)) {
    plain = gunzip(input);
    input = plain;
  }
  Header h = parse_header(input, Container::SingleFile);
  if (h.container != Container::SingleFile) {
    throw Error(ErrorCode::UnsupportedFormat, "in-memory images must be single-file NIfTI-1");
  }
  if (h.vox_offset < static_cast<double>(kHeaderSize)) h.vox_offset = kHeaderSize;
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset > input.size()) throw Error(ErrorCode::CorruptHeader, "vox_offset beyond end of file");
  return decode_data(h, input.subspan(offset));
}

namespace detail {

inline std::string strip_gz(const std::string& path) {
  return ends_with(path, ".gz") ? path.substr(0, path.size() - 3) : path;
}

/// "a.hdr[.gz]" -> "a<ext>[.gz]" for a four-character extension.
inline std::string with_pair_extension(const std::string& path, const char* ext) {
  std::string base = strip_gz(path);
  std::string gz = path.size() > base.size() ? ".gz" : "";
  return base.substr(0, base.size() - 4) + ext + gz;
}

inline std::string find_existing(const std::string& candidate) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(candidate, ec)) return candidate;
  std::string alt = ends_with(candidate, ".gz") ? candidate.substr(0, candidate.size() - 3) : candidate + ".gz";
  if (std::filesystem::is_regular_file(alt, ec)) return alt;
  return candidate;
}

}  // namespace detail

/// Loads a CT volume and calibrates it to HU. Oblique orientations are
/// accepted; a note is appended to `warnings` when one is given.
inline HUVolume load_volume(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  std::string header_path = path;
  const std::string base = detail::strip_gz(path);
  if (ends_with(base, ".img")) header_path = detail::find_existing(detail::with_pair_extension(path, ".hdr"));

  Bytes header_bytes = read_maybe_gzip(header_path);
  std::optional<Container> hint;
  const std::string header_base = detail::strip_gz(header_path);
  if (ends_with(header_base, ".nii")) hint = Container::SingleFile;
  if (ends_with(header_base, ".hdr")) hint = Container::Pair;
  Header h = parse_header(header_bytes, hint);

  HUVolume vol;
  if (h.container == Container::SingleFile) {
    if (h.vox_offset < static_cast<double>(kHeaderSize)) h.vox_offset = kHeaderSize;
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (offset > header_bytes.size()) throw Error(ErrorCode::CorruptHeader, "vox_offset beyond end of file");
    vol = decode_data(h, std::span<const std::uint8_t>(header_bytes).subspan(offset));
  } else {
    if (!ends_with(header_base, ".hdr")) {
      throw Error(ErrorCode::UnsupportedFormat, "header/image pair must be opened via .hdr or .img");
    }
    const std::string image_path = detail::find_existing(detail::with_pair_extension(header_path, ".img"));
    Bytes image = read_maybe_gzip(image_path);
    const auto offset = static_cast<std::size_t>(std::max(0.0, h.vox_offset));
    if (offset > image.size()) throw Error(ErrorCode::CorruptHeader, "vox_offset beyond end of image file");
    vol = decode_data(h, std::span<const std::uint8_t>(image).subspan(offset));
  }
  if (warnings && vol.geometry.is_oblique()) {
    warnings->push_back("oblique orientation: axis codes taken from dominant directions");
  }
  return vol;
}

// ---------------------------------------------------------------------------
// encoding
// ---------------------------------------------------------------------------

/// Single-file NIfTI-1 bytes (uncompressed) for raw little-endian voxel data.
inline Bytes encode_nifti(const VolumeGeometry& g, DataType datatype, std::span<const std::uint8_t> data) {
  Bytes bytes = encode_header(g, datatype, Container::SingleFile);
  bytes.resize(kSingleFileOffset, 0);
  bytes.insert(bytes.end(), data.begin(), data.end());
  return bytes;
}

inline Bytes encode_mask(const BinaryMask& mask) {
  return encode_nifti(mask.geometry, DataType::UInt8, mask.values);
}

inline void write_image(const std::string& path, const VolumeGeometry& g, DataType datatype,
                        std::span<const std::uint8_t> data) {
  const bool compress = ends_with(path, ".gz");
  const std::string base = detail::strip_gz(path);
  auto emit = [&](const std::string& p, Bytes bytes) {
    write_file(p, compress ? gzip(bytes) : bytes);
  };
  if (ends_with(base, ".hdr") || ends_with(base, ".img")) {
    emit(detail::with_pair_extension(path, ".hdr"), encode_header(g, datatype, Container::Pair));
    emit(detail::with_pair_extension(path, ".img"), Bytes(data.begin(), data.end()));
  } else {
    emit(path, encode_nifti(g, datatype, data));
  }
}

/// Writes an unsigned 8-bit 0/1 mask.
inline void save_mask(const BinaryMask& mask, const std::string& path) {
  write_image(path, mask.geometry, DataType::UInt8, mask.values);
}

/// Writes an unsigned 8-bit label map (e.g. 1 = right lung, 2 = left lung).
inline void save_labels(const Grid<std::uint8_t>& labels, const std::string& path) {
  write_image(path, labels.geometry, DataType::UInt8, labels.values);
}

inline void save_volume(const HUVolume& volume, const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  std::span<const std::uint8_t> raw(reinterpret_cast<const std::uint8_t*>(volume.values.data()),
                                    volume.values.size() * sizeof(float));
  write_image(path, volume.geometry, DataType::Float32, raw);
}

/// Mask from an image: voxels equal to `label` when given, else nonzero.
inline BinaryMask mask_from_volume(const HUVolume& image, std::optional<int> label = std::nullopt) {
  BinaryMask mask(image.geometry);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image.values[i];
    mask.values[i] = label ? (v == static_cast<float>(*label)) : (v != 0.0f);
  }
  return mask;
}

inline BinaryMask load_mask(const std::string& path, std::optional<int> label = std::nullopt) {
  return mask_from_volume(load_volume(path), label);
}

}  // namespace lungseg::io
