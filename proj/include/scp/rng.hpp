#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "scp/tensor.hpp"

namespace scp {

using Rng = std::mt19937_64;

/// Deterministic substream seed from a master seed and a path of labels, e.g.
/// derive_seed(seed, {kStreamPrior, record_index}). Distinct paths give
/// statistically independent generators.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  words.push_back(static_cast<std::uint32_t>(master));
  words.push_back(static_cast<std::uint32_t>(master >> 32));
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  Rng gen(seq);
  return gen();
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

/// Substream labels shared by every stage that draws random numbers.
enum Stream : std::uint64_t {
  kStreamPrior = 1,
  kStreamForwardNoise = 2,
  kStreamLayout = 3,
  kStreamJitter = 4,
  kStreamInit = 5,
  kStreamTraining = 6,
  kStreamSubset = 7,
  kStreamEvaluation = 8,
};

inline LatentImage normal_latent(int height, int width, int channels, Rng& rng) {
  LatentImage out(height, width, channels);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out.data()) v = normal(rng);
  return out;
}

}  // namespace scp
