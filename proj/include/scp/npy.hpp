#pragma once

// Reader/writer for the NumPy .npy container (format versions 1.0 and 2.0 read,
// 1.0 written). Little-endian, C-order only.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scp/error.hpp"
#include "scp/tensor.hpp"

namespace scp {

enum class DType : std::uint8_t { f4, f8, i1, i2, i4, i8, u1, u2, u4, u8, b1 };

std::size_t dtype_size(DType dtype) noexcept;
/// Numpy descr string, e.g. "<f4" or "|u1".
std::string dtype_descr(DType dtype);

struct NpyArray {
  DType dtype = DType::f8;
  std::vector<std::size_t> shape;  // empty shape is a scalar
  std::vector<std::byte> payload;  // raw little-endian elements, C-order

  std::size_t element_count() const noexcept;

  template <typename T>
  static NpyArray from_values(DType dtype, std::vector<std::size_t> shape, std::span<const T> values);

  /// Converts any numeric dtype to double.
  std::vector<double> to_doubles() const;
  /// Converts integer and bool dtypes to int64; float dtypes throw FormatError.
  std::vector<std::int64_t> to_integers() const;

  friend bool operator==(const NpyArray&, const NpyArray&) = default;
};

std::vector<std::byte> encode_npy(const NpyArray& array);
NpyArray decode_npy(std::span<const std::byte> bytes);

NpyArray read_array(const std::filesystem::path& path);
void write_array(const std::filesystem::path& path, const NpyArray& array);

/// Latent files are (H', W', C) float arrays; written as float32.
LatentImage latent_from_array(const NpyArray& array);
NpyArray latent_to_array(const LatentImage& latent, DType dtype = DType::f4);
LatentImage read_latent(const std::filesystem::path& path);
void write_latent(const std::filesystem::path& path, const LatentImage& latent);

/// Mask files are (H, W) integer arrays; written as uint8 when every id fits, else int32.
LabelMask mask_from_array(const NpyArray& array, int ignore_id = kDefaultIgnoreId);
NpyArray mask_to_array(const LabelMask& mask);
LabelMask read_mask(const std::filesystem::path& path, int ignore_id = kDefaultIgnoreId);
void write_mask(const std::filesystem::path& path, const LabelMask& mask);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

/// zlib crc32 of a byte range, chainable through `seed`.
std::uint32_t crc32_of(std::span<const std::byte> bytes, std::uint32_t seed = 0);

template <typename T>
NpyArray NpyArray::from_values(DType dtype, std::vector<std::size_t> shape, std::span<const T> values) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  if (sizeof(T) != dtype_size(dtype)) throw FormatError("element size does not match " + dtype_descr(dtype));
  NpyArray out;
  out.dtype = dtype;
  out.shape = std::move(shape);
  if (out.element_count() != values.size()) throw ShapeError("value count does not match array shape");
  const auto bytes = std::as_bytes(values);
  out.payload.assign(bytes.begin(), bytes.end());
  return out;
}

}  // namespace scp
