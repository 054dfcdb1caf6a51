#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "scp/corpus.hpp"

namespace scp {

/// Fixed parameters of the synthetic scene family. Class c has a base token
/// value (a row of `base`) drawn from the grid {-1.5, -0.5, 0.5, 1.5}^C, so any
/// two classes differ by at least 1.0 in some channel; jitter never exceeds
/// `jitter_scale` per channel, and the default scale 0.25 keeps the base
/// separation at four times the jitter.
struct ToyWorld {
  int num_classes = 5;
  int latent_height = 16;
  int latent_width = 16;
  int channels = 4;
  int mask_factor = 4;
  double jitter_scale = 0.25;

  Eigen::MatrixXd base;      // K x C
  Eigen::MatrixXd gradient;  // K x C, amplitude of the top-to-bottom ramp
  Eigen::VectorXd presence;  // K, probability that a class appears in a scene

  static ToyWorld make(int num_classes);

  int mask_height() const noexcept { return latent_height * mask_factor; }
  int mask_width() const noexcept { return latent_width * mask_factor; }
};

/// An axis-aligned region in mask pixels, [y0, y1) x [x0, x1).
struct ToyRegion {
  int class_id = 0;
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};

struct ToyScene {
  CorpusRecord record;
  std::vector<ToyRegion> regions;  // painted in order, later regions on top
  Eigen::MatrixXd class_offset;    // K x C record-level offset shared by a class's tokens
};

/// Scene i depends only on (seed, i), so a corpus of n records is a prefix of any longer one.
ToyScene make_toy_scene(const ToyWorld& world, std::uint64_t seed, std::size_t index);

std::vector<CorpusRecord> make_toy_corpus(std::size_t n, int num_classes, std::uint64_t seed);
std::vector<CorpusRecord> make_toy_corpus(const ToyWorld& world, std::size_t n, std::uint64_t seed,
                                          std::size_t first_index = 0);

}  // namespace scp
