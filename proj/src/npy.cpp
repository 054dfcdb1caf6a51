#include "scp/npy.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace scp {

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

struct DTypeInfo {
  DType dtype;
  const char* descr;
  std::size_t size;
};

constexpr DTypeInfo kDTypes[] = {
    {DType::f4, "<f4", 4}, {DType::f8, "<f8", 8}, {DType::i1, "|i1", 1}, {DType::i2, "<i2", 2},
    {DType::i4, "<i4", 4}, {DType::i8, "<i8", 8}, {DType::u1, "|u1", 1}, {DType::u2, "<u2", 2},
    {DType::u4, "<u4", 4}, {DType::u8, "<u8", 8}, {DType::b1, "|b1", 1},
};

const DTypeInfo& info(DType dtype) {
  for (const auto& d : kDTypes) {
    if (d.dtype == dtype) return d;
  }
  throw FormatError("unknown dtype");
}

DType parse_descr(std::string descr) {
  // Single-byte types may legally carry any byte-order mark.
  if (descr.size() == 3 && descr[2] == '1' && (descr[0] == '<' || descr[0] == '=')) descr[0] = '|';
  if (descr.size() == 3 && descr[0] == '=') descr[0] = '<';
  for (const auto& d : kDTypes) {
    if (descr == d.descr) return d.dtype;
  }
  throw FormatError("unsupported dtype '" + descr + "'");
}

// Returns the raw text following `'key':` up to the matching delimiter.
std::string header_value(const std::string& header, const std::string& key) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) throw FormatError("npy header lacks '" + key + "'");
  auto pos = header.find(':', k);
  if (pos == std::string::npos) throw FormatError("npy header malformed near '" + key + "'");
  ++pos;
  while (pos < header.size() && header[pos] == ' ') ++pos;
  if (pos >= header.size()) throw FormatError("npy header truncated");
  if (header[pos] == '\'') {
    const auto end = header.find('\'', pos + 1);
    if (end == std::string::npos) throw FormatError("npy header has unterminated string");
    return header.substr(pos + 1, end - pos - 1);
  }
  if (header[pos] == '(') {
    const auto end = header.find(')', pos);
    if (end == std::string::npos) throw FormatError("npy header has unterminated shape");
    return header.substr(pos + 1, end - pos - 1);
  }
  const auto end = header.find_first_of(",}", pos);
  if (end == std::string::npos) throw FormatError("npy header malformed");
  return header.substr(pos, end - pos);
}

std::vector<std::size_t> parse_shape(const std::string& text) {
  std::vector<std::size_t> shape;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == ',')) ++pos;
    if (pos >= text.size()) break;
    std::size_t used = 0;
    unsigned long long dim = 0;
    try {
      dim = std::stoull(text.substr(pos), &used);
    } catch (const std::exception&) {
      throw FormatError("npy shape is not a tuple of integers: (" + text + ")");
    }
    if (used == 0) throw FormatError("npy shape malformed");
    shape.push_back(static_cast<std::size_t>(dim));
    pos += used;
  }
  return shape;
}

template <typename T>
T load_le(const std::byte* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

}  // namespace

std::size_t dtype_size(DType dtype) noexcept {
  for (const auto& d : kDTypes) {
    if (d.dtype == dtype) return d.size;
  }
  return 0;
}

std::string dtype_descr(DType dtype) { return info(dtype).descr; }

std::size_t NpyArray::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<double> NpyArray::to_doubles() const {
  const std::size_t n = element_count();
  std::vector<double> out(n);
  const std::byte* p = payload.data();
  const std::size_t es = dtype_size(dtype);
  for (std::size_t i = 0; i < n; ++i, p += es) {
    switch (dtype) {
      case DType::f4: out[i] = load_le<float>(p); break;
      case DType::f8: out[i] = load_le<double>(p); break;
      case DType::i1: out[i] = load_le<std::int8_t>(p); break;
      case DType::i2: out[i] = load_le<std::int16_t>(p); break;
      case DType::i4: out[i] = load_le<std::int32_t>(p); break;
      case DType::i8: out[i] = static_cast<double>(load_le<std::int64_t>(p)); break;
      case DType::u1: out[i] = load_le<std::uint8_t>(p); break;
      case DType::u2: out[i] = load_le<std::uint16_t>(p); break;
      case DType::u4: out[i] = load_le<std::uint32_t>(p); break;
      case DType::u8: out[i] = static_cast<double>(load_le<std::uint64_t>(p)); break;
      case DType::b1: out[i] = load_le<std::uint8_t>(p) != 0 ? 1.0 : 0.0; break;
    }
  }
  return out;
}

std::vector<std::int64_t> NpyArray::to_integers() const {
  const std::size_t n = element_count();
  std::vector<std::int64_t> out(n);
  const std::byte* p = payload.data();
  const std::size_t es = dtype_size(dtype);
  for (std::size_t i = 0; i < n; ++i, p += es) {
    switch (dtype) {
      case DType::f4:
      case DType::f8: throw FormatError("expected an integer array, found " + dtype_descr(dtype));
      case DType::i1: out[i] = load_le<std::int8_t>(p); break;
      case DType::i2: out[i] = load_le<std::int16_t>(p); break;
      case DType::i4: out[i] = load_le<std::int32_t>(p); break;
      case DType::i8: out[i] = load_le<std::int64_t>(p); break;
      case DType::u1: out[i] = load_le<std::uint8_t>(p); break;
      case DType::u2: out[i] = load_le<std::uint16_t>(p); break;
      case DType::u4: out[i] = load_le<std::uint32_t>(p); break;
      case DType::u8: {
        const auto v = load_le<std::uint64_t>(p);
        if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
          throw FormatError("uint64 value does not fit int64");
        }
        out[i] = static_cast<std::int64_t>(v);
        break;
      }
      case DType::b1: out[i] = load_le<std::uint8_t>(p) != 0 ? 1 : 0; break;
    }
  }
  return out;
}

std::vector<std::byte> encode_npy(const NpyArray& array) {
  if (array.payload.size() != array.element_count() * dtype_size(array.dtype)) {
    throw ShapeError("npy payload size does not match shape and dtype");
  }
  std::string shape = "(";
  for (std::size_t i = 0; i < array.shape.size(); ++i) {
    shape += std::to_string(array.shape[i]);
    if (array.shape.size() == 1 || i + 1 < array.shape.size()) shape += ",";
    if (i + 1 < array.shape.size()) shape += " ";
  }
  shape += ")";
  std::string header = "{'descr': '" + dtype_descr(array.dtype) +
                       "', 'fortran_order': False, 'shape': " + shape + ", }";
  // Pad so that magic + version + length + header is a multiple of 64, ending in '\n'.
  const std::size_t prefix = kMagicLen + 2 + 2;
  const std::size_t total = ((prefix + header.size() + 1 + 63) / 64) * 64;
  header.append(total - prefix - header.size() - 1, ' ');
  header.push_back('\n');
  if (header.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("npy header too long");

  std::vector<std::byte> out;
  out.reserve(total + array.payload.size());
  for (std::size_t i = 0; i < kMagicLen; ++i) out.push_back(static_cast<std::byte>(kMagic[i]));
  out.push_back(std::byte{1});
  out.push_back(std::byte{0});
  const auto len = static_cast<std::uint16_t>(header.size());
  out.push_back(static_cast<std::byte>(len & 0xff));
  out.push_back(static_cast<std::byte>(len >> 8));
  for (char ch : header) out.push_back(static_cast<std::byte>(ch));
  out.insert(out.end(), array.payload.begin(), array.payload.end());
  return out;
}

NpyArray decode_npy(std::span<const std::byte> bytes) {
  if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    throw FormatError("missing npy magic string");
  }
  const auto major = static_cast<unsigned>(bytes[kMagicLen]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<std::size_t>(bytes[8]) | (static_cast<std::size_t>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw FormatError("npy header truncated");
    header_len = 0;
    for (int i = 0; i < 4; ++i) header_len |= static_cast<std::size_t>(bytes[8 + i]) << (8 * i);
    offset = 12;
  } else {
    throw FormatError("unsupported npy version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw FormatError("npy header truncated");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + offset), header_len);

  NpyArray out;
  out.dtype = parse_descr(header_value(header, "descr"));
  if (header_value(header, "fortran_order") != "False") {
    throw FormatError("fortran-ordered arrays are not supported");
  }
  out.shape = parse_shape(header_value(header, "shape"));
  const std::size_t need = out.element_count() * dtype_size(out.dtype);
  const std::size_t have = bytes.size() - offset - header_len;
  if (have < need) {
    throw FormatError("npy payload truncated: " + std::to_string(have) + " of " + std::to_string(need) + " bytes");
  }
  if (have > need) throw FormatError("npy payload has trailing bytes");
  const auto* p = bytes.data() + offset + header_len;
  out.payload.assign(p, p + need);
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

NpyArray read_array(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_npy(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_array(const std::filesystem::path& path, const NpyArray& array) {
  write_file_bytes(path, encode_npy(array));
}

LatentImage latent_from_array(const NpyArray& array) {
  if (array.shape.size() != 3) {
    throw ShapeError("latent arrays must have shape (H, W, C), got rank " + std::to_string(array.shape.size()));
  }
  if (array.dtype != DType::f4 && array.dtype != DType::f8) {
    throw FormatError("latent arrays must be float32 or float64, got " + dtype_descr(array.dtype));
  }
  LatentImage latent(static_cast<int>(array.shape[0]), static_cast<int>(array.shape[1]),
                     static_cast<int>(array.shape[2]), array.to_doubles());
  if (!latent.all_finite()) throw DataError("latent contains non-finite values");
  return latent;
}

NpyArray latent_to_array(const LatentImage& latent, DType dtype) {
  std::vector<std::size_t> shape{static_cast<std::size_t>(latent.height()),
                                 static_cast<std::size_t>(latent.width()),
                                 static_cast<std::size_t>(latent.channels())};
  if (dtype == DType::f8) return NpyArray::from_values<double>(dtype, std::move(shape), latent.data());
  if (dtype != DType::f4) throw FormatError("latents are written as float32 or float64");
  std::vector<float> values(latent.data().begin(), latent.data().end());
  return NpyArray::from_values<float>(dtype, std::move(shape), values);
}

LatentImage read_latent(const std::filesystem::path& path) {
  try {
    return latent_from_array(read_array(path));
  } catch (const ShapeError& e) {
    throw ShapeError(path.string() + ": " + e.what());
  }
}

void write_latent(const std::filesystem::path& path, const LatentImage& latent) {
  write_array(path, latent_to_array(latent));
}

LabelMask mask_from_array(const NpyArray& array, int ignore_id) {
  if (array.shape.size() != 2) {
    throw ShapeError("mask arrays must have shape (H, W), got rank " + std::to_string(array.shape.size()));
  }
  const auto raw = array.to_integers();
  std::vector<std::int32_t> ids(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0 || raw[i] > std::numeric_limits<std::int32_t>::max()) {
      throw DataError("mask id " + std::to_string(raw[i]) + " out of range");
    }
    ids[i] = static_cast<std::int32_t>(raw[i]);
  }
  return LabelMask(static_cast<int>(array.shape[0]), static_cast<int>(array.shape[1]), std::move(ids), ignore_id);
}

NpyArray mask_to_array(const LabelMask& mask) {
  std::vector<std::size_t> shape{static_cast<std::size_t>(mask.height()), static_cast<std::size_t>(mask.width())};
  const auto ids = mask.ids();
  if (std::all_of(ids.begin(), ids.end(), [](std::int32_t v) { return v <= 255; })) {
    std::vector<std::uint8_t> narrow(ids.begin(), ids.end());
    return NpyArray::from_values<std::uint8_t>(DType::u1, std::move(shape), narrow);
  }
  return NpyArray::from_values<std::int32_t>(DType::i4, std::move(shape), ids);
}

LabelMask read_mask(const std::filesystem::path& path, int ignore_id) {
  try {
    return mask_from_array(read_array(path), ignore_id);
  } catch (const ShapeError& e) {
    throw ShapeError(path.string() + ": " + e.what());
  }
}

void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  write_array(path, mask_to_array(mask));
}

std::uint32_t crc32_of(std::span<const std::byte> bytes, std::uint32_t seed) {
  uLong crc = seed;
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace scp
