#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scp/corpus.hpp"
#include "scp/metrics.hpp"
#include "scp/prior_bank.hpp"
#include "scp/sampling.hpp"
#include "scp/toy_denoiser.hpp"

namespace scp {

struct StudyOptions {
  int substeps = 20;  // transitions of a full (mu = 1) trajectory; shorter ones scale with mu
  std::uint64_t seed = 0;
  int jobs = 1;
  AssembleOptions assemble;
};

/// Where a generated set's initial latents come from.
struct InitSource {
  enum class Type { prior, ground_truth } type = Type::prior;
  PriorKind kind = PriorKind::normal;

  static InitSource ground_truth() { return {Type::ground_truth, PriorKind::normal}; }
  static InitSource prior(PriorKind k) { return {Type::prior, k}; }
};

/// One latent per record, conditioned on the record's mask. Record i uses the
/// seed derive_seed(options.seed, {kStreamEvaluation, i}) whatever the source or mu,
/// so sets generated for different sources share their random numbers.
/// `bank` may be null for the normal prior and the ground-truth source.
std::vector<LatentImage> generate_set(const ToyDenoiser& denoiser, std::span<const CorpusRecord> records,
                                      const PriorBank* bank, InitSource source, double mu,
                                      const StudyOptions& options);

struct SetScores {
  double fid = 0.0;
  double miou = 0.0;
  double acc = 0.0;
};

/// Generated set scored against the real latents of the conditioning records.
class SetEvaluator {
 public:
  /// `prototypes` (K x C) drive the oracle segmentation; pass the toy base values.
  SetEvaluator(std::span<const CorpusRecord> records, Eigen::MatrixXd prototypes);

  SetScores score(std::span<const LatentImage> generated) const;
  double fid(std::span<const LatentImage> generated) const;

 private:
  std::span<const CorpusRecord> records_;
  Eigen::MatrixXd prototypes_;
  SampleFrechetReference reference_;
};

struct StudyRow {
  double mu = 0.0;
  double fid_gt = 0.0;
  double fid_normal = 0.0;
  double fid_joint = 0.0;
};

/// For each mu: Frechet distance to the real latents of sets started from the
/// noised ground truth, the normal prior and the joint prior.
std::vector<StudyRow> empirical_mismatch_study(const ToyDenoiser& denoiser, std::span<const CorpusRecord> records,
                                               const PriorBank& bank, std::span<const double> mu_grid,
                                               const StudyOptions& options);

/// "start:stop:step", inclusive of stop up to rounding, e.g. "0:1:0.05" -> 21 values.
std::vector<double> parse_grid(const std::string& text);

void write_study_tsv(std::ostream& out, std::span<const StudyRow> rows);

}  // namespace scp
