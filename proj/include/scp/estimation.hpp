#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scp/corpus.hpp"
#include "scp/prior_bank.hpp"
#include "scp/running_stats.hpp"

namespace scp {

/// Accumulates spatial, per-class and per-(location, class) statistics. Any
/// partition of a corpus may be accumulated independently and merged.
class PriorAccumulator {
 public:
  /// Dimensions are fixed by the first record added.
  explicit PriorAccumulator(int num_classes);

  /// Throws ShapeError when the latent grid differs from earlier records and
  /// DataError when a labeled id is >= num_classes.
  void add(const CorpusRecord& record);
  void merge(const PriorAccumulator& other);

  std::uint64_t records() const noexcept { return records_; }

  /// Throws DataError when no record has been added.
  PriorBank finalize(int fallback_min_count, std::uint32_t corpus_checksum = 0) const;

 private:
  void init(const BankDims& dims);

  int num_classes_;
  bool initialised_ = false;
  BankDims dims_;
  std::uint64_t records_ = 0;
  StatsGrid spatial_;
  StatsGrid categorical_;
  StatsGrid joint_;
};

/// crc32 chained over each record's latent values (float64 LE) and mask ids (int32 LE).
std::uint32_t record_checksum(const CorpusRecord& record, std::uint32_t seed);

PriorBank estimate_priors(std::span<const CorpusRecord> corpus, int num_classes,
                          int fallback_min_count = kDefaultFallbackMinCount);

/// Single pass over a manifest stream; the bank's checksum covers the raw files.
PriorBank estimate_priors(CorpusReader& reader, int num_classes, int fallback_min_count = kDefaultFallbackMinCount,
                          int jobs = 1);

}  // namespace scp
