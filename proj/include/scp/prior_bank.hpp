#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace scp {

inline constexpr int kDefaultFallbackMinCount = 32;
inline constexpr std::uint32_t kBankFormatVersion = 1;

struct BankDims {
  int height = 0;  // latent H'
  int width = 0;   // latent W'
  int channels = 0;
  int num_classes = 0;

  std::size_t tokens() const noexcept { return static_cast<std::size_t>(height) * width; }
  friend bool operator==(const BankDims&, const BankDims&) = default;
};

/// Spatial, categorical and joint Gaussian statistics estimated from a corpus.
/// Variances are population variances (divide by count) stored unfloored.
///
/// Layouts (row-major, channels innermost):
///   spatial_*  [H'][W'][C]
///   cat_*      [K][C], cat_count [K]
///   joint_*    [H'][W'][K][C], joint_count / fallback [H'][W'][K]
///
/// Joint cells with count < fallback_min_count are flagged and keep zero
/// mean/variance; samplers use the class statistics there.
struct PriorBank {
  BankDims dims;
  int fallback_min_count = kDefaultFallbackMinCount;
  std::uint64_t num_records = 0;
  std::uint32_t corpus_checksum = 0;

  std::vector<double> spatial_mean, spatial_var;
  std::vector<double> cat_mean, cat_var;
  std::vector<std::uint64_t> cat_count;
  std::vector<double> joint_mean, joint_var;
  std::vector<std::uint64_t> joint_count;
  std::vector<std::uint8_t> fallback;

  std::size_t spatial_index(int y, int x) const noexcept {
    return (static_cast<std::size_t>(y) * dims.width + x) * dims.channels;
  }
  std::size_t joint_cell(int y, int x, int cls) const noexcept {
    return (static_cast<std::size_t>(y) * dims.width + x) * dims.num_classes + cls;
  }
  std::size_t class_index(int cls) const noexcept { return static_cast<std::size_t>(cls) * dims.channels; }

  bool has_class(int cls) const noexcept {
    return cls >= 0 && cls < dims.num_classes && cat_count[static_cast<std::size_t>(cls)] > 0;
  }

  /// Throws FormatError if array sizes disagree with dims or any variance is negative.
  void validate() const;

  friend bool operator==(const PriorBank&, const PriorBank&) = default;
};

std::vector<std::byte> encode_bank(const PriorBank& bank);
PriorBank decode_bank(std::span<const std::byte> bytes);
void save_bank(const PriorBank& bank, const std::filesystem::path& path);
PriorBank load_bank(const std::filesystem::path& path);

}  // namespace scp
