#include "scp/estimation.hpp"

#include <thread>

#include "scp/error.hpp"
#include "scp/npy.hpp"

namespace scp {

PriorAccumulator::PriorAccumulator(int num_classes) : num_classes_(num_classes) {
  if (num_classes <= 0) throw ParameterError("number of classes must be positive");
}

void PriorAccumulator::init(const BankDims& dims) {
  dims_ = dims;
  spatial_ = StatsGrid(dims.tokens(), dims.channels);
  categorical_ = StatsGrid(static_cast<std::size_t>(dims.num_classes), dims.channels);
  joint_ = StatsGrid(dims.tokens() * dims.num_classes, dims.channels);
  initialised_ = true;
}

void PriorAccumulator::add(const CorpusRecord& record) {
  const auto& latent = record.latent;
  const BankDims dims{latent.height(), latent.width(), latent.channels(), num_classes_};
  if (!initialised_) {
    init(dims);
  } else if (!(dims == dims_)) {
    throw ShapeError("record '" + record.id + "' has latent " + std::to_string(dims.height) + "x" +
                     std::to_string(dims.width) + "x" + std::to_string(dims.channels) +
                     ", corpus uses " + std::to_string(dims_.height) + "x" + std::to_string(dims_.width) +
                     "x" + std::to_string(dims_.channels));
  }
  if (!latent.all_finite()) throw DataError("record '" + record.id + "' has non-finite latent values");
  const LabelMask tokens = record.token_mask();
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const int cls = tokens.at(y, x);
      if (cls != tokens.ignore_id() && cls >= num_classes_) {
        throw DataError("record '" + record.id + "' has class id " + std::to_string(cls) +
                        " >= number of classes " + std::to_string(num_classes_));
      }
    }
  }
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const auto token = latent.token(y, x);
      const std::size_t loc = static_cast<std::size_t>(y) * dims.width + x;
      spatial_.update(loc, token);
      const int cls = tokens.at(y, x);
      if (cls == tokens.ignore_id()) continue;
      categorical_.update(static_cast<std::size_t>(cls), token);
      joint_.update(loc * num_classes_ + cls, token);
    }
  }
  ++records_;
}

void PriorAccumulator::merge(const PriorAccumulator& other) {
  if (other.num_classes_ != num_classes_) throw ShapeError("cannot merge accumulators with different class counts");
  if (!other.initialised_) return;
  if (!initialised_) {
    *this = other;
    return;
  }
  if (!(other.dims_ == dims_)) throw ShapeError("cannot merge accumulators over different latent grids");
  spatial_.merge(other.spatial_);
  categorical_.merge(other.categorical_);
  joint_.merge(other.joint_);
  records_ += other.records_;
}

PriorBank PriorAccumulator::finalize(int fallback_min_count, std::uint32_t corpus_checksum) const {
  if (records_ == 0) throw DataError("cannot estimate priors from an empty corpus");
  if (fallback_min_count < 0) throw ParameterError("fallback minimum count must be non-negative");
  PriorBank bank;
  bank.dims = dims_;
  bank.fallback_min_count = fallback_min_count;
  bank.num_records = records_;
  bank.corpus_checksum = corpus_checksum;
  bank.spatial_mean = spatial_.means();
  bank.spatial_var = spatial_.variances();
  bank.cat_mean = categorical_.means();
  bank.cat_var = categorical_.variances();
  bank.cat_count.assign(categorical_.counts().begin(), categorical_.counts().end());
  bank.joint_mean = joint_.means();
  bank.joint_var = joint_.variances();
  bank.joint_count.assign(joint_.counts().begin(), joint_.counts().end());
  bank.fallback.assign(joint_.cells(), 0);
  const auto channels = static_cast<std::size_t>(dims_.channels);
  for (std::size_t cell = 0; cell < joint_.cells(); ++cell) {
    if (bank.joint_count[cell] >= static_cast<std::uint64_t>(fallback_min_count)) continue;
    bank.fallback[cell] = 1;
    std::fill_n(bank.joint_mean.begin() + static_cast<std::ptrdiff_t>(cell * channels), channels, 0.0);
    std::fill_n(bank.joint_var.begin() + static_cast<std::ptrdiff_t>(cell * channels), channels, 0.0);
  }
  return bank;
}

std::uint32_t record_checksum(const CorpusRecord& record, std::uint32_t seed) {
  seed = crc32_of(std::as_bytes(record.latent.data()), seed);
  return crc32_of(std::as_bytes(record.mask.ids()), seed);
}

PriorBank estimate_priors(std::span<const CorpusRecord> corpus, int num_classes, int fallback_min_count) {
  PriorAccumulator acc(num_classes);
  std::uint32_t checksum = 0;
  for (const auto& record : corpus) {
    acc.add(record);
    checksum = record_checksum(record, checksum);
  }
  return acc.finalize(fallback_min_count, checksum);
}

PriorBank estimate_priors(CorpusReader& reader, int num_classes, int fallback_min_count, int jobs) {
  if (jobs < 1) throw ParameterError("jobs must be positive");
  // Record i goes to shard i % jobs; shards merge in index order, so the
  // result depends on `jobs` but never on thread timing.
  std::vector<PriorAccumulator> shards(static_cast<std::size_t>(jobs), PriorAccumulator(num_classes));
  std::vector<CorpusRecord> batch;
  for (;;) {
    batch.clear();
    while (batch.size() < shards.size()) {
      auto record = reader.next();
      if (!record) break;
      batch.push_back(std::move(*record));
    }
    if (batch.empty()) break;
    if (batch.size() == 1) {
      shards[0].add(batch[0]);
    } else {
      std::vector<std::exception_ptr> errors(batch.size());
      std::vector<std::thread> workers;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        workers.emplace_back([&, i] {
          try {
            shards[i].add(batch[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
  }
  for (std::size_t i = 1; i < shards.size(); ++i) shards[0].merge(shards[i]);
  return shards[0].finalize(fallback_min_count, reader.checksum());
}

}  // namespace scp
