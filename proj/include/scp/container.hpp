#pragma once

// Versioned binary container of named .npy arrays plus a UTF-8 JSON metadata
// header, closed by a crc32 trailer over all preceding bytes:
//
//   magic[8] | u32 version | u32 meta_len | meta | u32 n_arrays |
//   n_arrays x (u16 name_len | name | u64 blob_len | npy blob) | u32 crc32
//
// Integers are little-endian. Array order is preserved.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scp/npy.hpp"

namespace scp {

using Magic = std::array<char, 8>;

struct Container {
  std::string metadata;  // UTF-8 JSON text
  std::vector<std::pair<std::string, NpyArray>> arrays;

  const NpyArray& array(const std::string& name) const;
  void add(std::string name, NpyArray array) { arrays.emplace_back(std::move(name), std::move(array)); }
};

std::vector<std::byte> encode_container(const Magic& magic, std::uint32_t version, const Container& container);
/// Throws FormatError on wrong magic, version mismatch, truncation or checksum failure.
Container decode_container(const Magic& magic, std::uint32_t version, std::span<const std::byte> bytes);

}  // namespace scp
