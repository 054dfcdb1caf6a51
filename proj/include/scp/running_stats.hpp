#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace scp {

// Welford accumulation kernels over caller-owned storage. `mean` and `m2`
// have one entry per channel; m2 holds summed squared deviations.
void welford_update(std::uint64_t& count, std::span<double> mean, std::span<double> m2,
                    std::span<const double> token);
void welford_merge(std::uint64_t& count, std::span<double> mean, std::span<double> m2,
                   std::uint64_t other_count, std::span<const double> other_mean,
                   std::span<const double> other_m2);

/// Streaming per-channel mean and population variance of C-vectors.
class RunningStats {
 public:
  RunningStats() = default;
  explicit RunningStats(int channels);

  int channels() const noexcept { return static_cast<int>(mean_.size()); }
  std::uint64_t count() const noexcept { return count_; }
  std::span<const double> mean() const noexcept { return mean_; }
  std::span<const double> m2() const noexcept { return m2_; }
  /// m2 / count; zeros when empty.
  std::vector<double> variance() const;

  /// Throws DataError on a non-finite token, ShapeError on a channel mismatch.
  void update(std::span<const double> token);
  void merge(const RunningStats& other);

 private:
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

RunningStats stats_update(RunningStats s, std::span<const double> token);
RunningStats stats_merge(RunningStats a, const RunningStats& b);

/// Dense array of independent accumulators ("cells") sharing a channel count,
/// laid out contiguously for the prior grids.
class StatsGrid {
 public:
  StatsGrid() = default;
  StatsGrid(std::size_t cells, int channels);

  std::size_t cells() const noexcept { return count_.size(); }
  int channels() const noexcept { return channels_; }

  void update(std::size_t cell, std::span<const double> token);
  void merge(const StatsGrid& other);

  std::uint64_t count(std::size_t cell) const { return count_[cell]; }
  std::span<const double> mean(std::size_t cell) const;
  std::span<const double> m2(std::size_t cell) const;

  std::span<const std::uint64_t> counts() const noexcept { return count_; }
  /// Flattened cells x channels, variance = m2 / count (0 for empty cells).
  std::vector<double> means() const { return mean_; }
  std::vector<double> variances() const;

 private:
  int channels_ = 0;
  std::vector<std::uint64_t> count_;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

}  // namespace scp
