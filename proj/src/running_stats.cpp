#include "scp/running_stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scp/error.hpp"

namespace scp {

void welford_update(std::uint64_t& count, std::span<double> mean, std::span<double> m2,
                    std::span<const double> token) {
  ++count;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t c = 0; c < token.size(); ++c) {
    const double delta = token[c] - mean[c];
    mean[c] += delta * inv;
    m2[c] += delta * (token[c] - mean[c]);
  }
}

void welford_merge(std::uint64_t& count, std::span<double> mean, std::span<double> m2,
                   std::uint64_t other_count, std::span<const double> other_mean,
                   std::span<const double> other_m2) {
  if (other_count == 0) return;
  if (count == 0) {
    count = other_count;
    std::copy(other_mean.begin(), other_mean.end(), mean.begin());
    std::copy(other_m2.begin(), other_m2.end(), m2.begin());
    return;
  }
  const double na = static_cast<double>(count);
  const double nb = static_cast<double>(other_count);
  const double n = na + nb;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double delta = other_mean[c] - mean[c];
    mean[c] += delta * (nb / n);
    m2[c] += other_m2[c] + delta * delta * (na * nb / n);
  }
  count += other_count;
}

RunningStats::RunningStats(int channels) : mean_(static_cast<std::size_t>(channels), 0.0), m2_(mean_) {
  if (channels <= 0) throw ShapeError("running stats need a positive channel count");
}

std::vector<double> RunningStats::variance() const {
  std::vector<double> out(m2_.size(), 0.0);
  if (count_ == 0) return out;
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = m2_[c] / static_cast<double>(count_);
  return out;
}

void RunningStats::update(std::span<const double> token) {
  if (mean_.empty()) *this = RunningStats(static_cast<int>(token.size()));
  if (token.size() != mean_.size()) {
    throw ShapeError("token has " + std::to_string(token.size()) + " channels, expected " +
                     std::to_string(mean_.size()));
  }
  for (double v : token) {
    if (!std::isfinite(v)) throw DataError("non-finite token value");
  }
  welford_update(count_, mean_, m2_, token);
}

void RunningStats::merge(const RunningStats& other) {
  if (!mean_.empty() && !other.mean_.empty() && other.mean_.size() != mean_.size()) {
    throw ShapeError("cannot merge running stats with different channels");
  }
  if (other.count_ == 0) return;
  if (mean_.empty()) {
    *this = other;
    return;
  }
  welford_merge(count_, mean_, m2_, other.count_, other.mean_, other.m2_);
}

RunningStats stats_update(RunningStats s, std::span<const double> token) {
  s.update(token);
  return s;
}

RunningStats stats_merge(RunningStats a, const RunningStats& b) {
  a.merge(b);
  return a;
}

StatsGrid::StatsGrid(std::size_t cells, int channels)
    : channels_(channels),
      count_(cells, 0),
      mean_(cells * static_cast<std::size_t>(channels), 0.0),
      m2_(mean_.size(), 0.0) {}

void StatsGrid::update(std::size_t cell, std::span<const double> token) {
  const std::size_t off = cell * channels_;
  welford_update(count_[cell], std::span(mean_).subspan(off, channels_),
                 std::span(m2_).subspan(off, channels_), token);
}

void StatsGrid::merge(const StatsGrid& other) {
  if (other.cells() != cells() || other.channels_ != channels_) {
    throw ShapeError("cannot merge stats grids of different layouts");
  }
  for (std::size_t cell = 0; cell < cells(); ++cell) {
    const std::size_t off = cell * channels_;
    welford_merge(count_[cell], std::span(mean_).subspan(off, channels_), std::span(m2_).subspan(off, channels_),
                  other.count_[cell], std::span(other.mean_).subspan(off, channels_),
                  std::span(other.m2_).subspan(off, channels_));
  }
}

std::span<const double> StatsGrid::mean(std::size_t cell) const {
  return std::span(mean_).subspan(cell * channels_, channels_);
}

std::span<const double> StatsGrid::m2(std::size_t cell) const {
  return std::span(m2_).subspan(cell * channels_, channels_);
}

std::vector<double> StatsGrid::variances() const {
  std::vector<double> out(m2_.size(), 0.0);
  for (std::size_t cell = 0; cell < cells(); ++cell) {
    if (count_[cell] == 0) continue;
    const double n = static_cast<double>(count_[cell]);
    for (int c = 0; c < channels_; ++c) out[cell * channels_ + c] = m2_[cell * channels_ + c] / n;
  }
  return out;
}

}  // namespace scp
