#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "scp/tensor.hpp"

namespace scp {

/// Mean and unbiased (n - 1) covariance of a feature set.
struct GaussianSummary {
  std::size_t n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Rows of `features` are samples. Needs at least two rows.
GaussianSummary summarize(const Eigen::MatrixXd& features);
/// Flattened latents as feature vectors.
GaussianSummary summarize(std::span<const LatentImage> latents);

/// Stacks flattened latents as rows.
Eigen::MatrixXd latent_features(std::span<const LatentImage> latents);

inline constexpr double kEigenClamp = 1e-8;

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the trace of the
/// square root taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2}.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

/// Caches S^{1/2} of a fixed reference summary for repeated comparisons.
class FrechetReference {
 public:
  explicit FrechetReference(GaussianSummary reference);
  double distance(const GaussianSummary& other) const;
  const GaussianSummary& summary() const noexcept { return ref_; }

 private:
  GaussianSummary ref_;
  Eigen::MatrixXd sqrt_cov_;
  double trace_ = 0.0;
};

/// Same distance as frechet_distance(summarize(ref), summarize(other)), computed
/// in sample space. With centred samples A (n_a x D) and B (n_b x D),
/// Tr((S_a S_b)^{1/2}) is the sum of singular values of A B^T / sqrt((n_a-1)(n_b-1)),
/// so the cost is O(n^2 D) instead of O(D^3). Preferable whenever n << D.
class SampleFrechetReference {
 public:
  /// Rows are samples; at least two.
  explicit SampleFrechetReference(const Eigen::MatrixXd& features);
  double distance(const Eigen::MatrixXd& features) const;
  double distance(std::span<const LatentImage> latents) const { return distance(latent_features(latents)); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd centered_;  // scaled by 1/sqrt(n-1)
  double trace_ = 0.0;
};

/// Symmetric PSD square root via eigendecomposition; eigenvalues below zero are clamped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

struct SegmentationScores {
  double miou = 0.0;
  double acc = 0.0;
};

/// Labels each generated token with the class whose prototype (row of
/// `prototypes`, K x C) is nearest in Euclidean distance, then scores against
/// the mask downsampled to the latent grid. IoU is averaged over classes present
/// in the mask; ignore-labeled tokens are skipped.
SegmentationScores oracle_segmentation_scores(const LatentImage& generated, const LabelMask& mask,
                                              const Eigen::MatrixXd& prototypes);

/// Mean over unordered pairs of ||a - b|| / sqrt(D).
double batch_diversity(std::span<const LatentImage> latents);

/// Greedy max-min subset of rows of `features`, starting at `start_index`.
/// Ties go to the lowest index.
std::vector<std::size_t> furthest_point_sampling(const Eigen::MatrixXd& features, std::size_t k,
                                                 std::size_t start_index = 0);

}  // namespace scp
