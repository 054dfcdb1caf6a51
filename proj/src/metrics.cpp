#include "scp/metrics.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "scp/error.hpp"

namespace scp {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_solve(const Eigen::MatrixXd& m, bool vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      m, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition did not converge");
  return solver;
}

double trace_sqrt_of_product(const Eigen::MatrixXd& sqrt_a, const Eigen::MatrixXd& cov_b) {
  Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const auto solver = eigen_solve(inner, false);
  double trace = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double lambda = solver.eigenvalues()[i];
    if (lambda > 0.0) trace += std::sqrt(lambda);
  }
  return trace;
}

void check_summary(const GaussianSummary& s) {
  if (s.cov.rows() != s.mean.size() || s.cov.cols() != s.mean.size()) {
    throw ShapeError("summary covariance does not match its mean dimension");
  }
}

}  // namespace

GaussianSummary summarize(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw ParameterError("summarize needs at least two feature vectors");
  GaussianSummary s;
  s.n = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

Eigen::MatrixXd latent_features(std::span<const LatentImage> latents) {
  if (latents.empty()) return {};
  Eigen::MatrixXd features(static_cast<Eigen::Index>(latents.size()), static_cast<Eigen::Index>(latents[0].size()));
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (!latents[i].same_shape(latents[0])) throw ShapeError("latents in a feature set must share a shape");
    const auto d = latents[i].data();
    for (std::size_t j = 0; j < d.size(); ++j) features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d[j];
  }
  return features;
}

GaussianSummary summarize(std::span<const LatentImage> latents) { return summarize(latent_features(latents)); }

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  const auto solver = eigen_solve(sym, true);
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  return FrechetReference(a).distance(b);
}

FrechetReference::FrechetReference(GaussianSummary reference) : ref_(std::move(reference)) {
  check_summary(ref_);
  sqrt_cov_ = psd_sqrt(ref_.cov);
  trace_ = ref_.cov.trace();
}

double FrechetReference::distance(const GaussianSummary& other) const {
  check_summary(other);
  if (other.mean.size() != ref_.mean.size()) {
    throw ShapeError("Frechet distance between summaries of dimension " + std::to_string(ref_.mean.size()) +
                     " and " + std::to_string(other.mean.size()));
  }
  const double mean_term = (ref_.mean - other.mean).squaredNorm();
  const double value = mean_term + trace_ + other.cov.trace() - 2.0 * trace_sqrt_of_product(sqrt_cov_, other.cov);
  if (!std::isfinite(value)) throw NumericalError("Frechet distance is not finite");
  return std::max(value, 0.0);
}

SampleFrechetReference::SampleFrechetReference(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw ParameterError("Frechet reference needs at least two samples");
  mean_ = features.colwise().mean().transpose();
  centered_ = (features.rowwise() - mean_.transpose()) / std::sqrt(static_cast<double>(features.rows() - 1));
  trace_ = centered_.squaredNorm();
}

double SampleFrechetReference::distance(const Eigen::MatrixXd& features) const {
  if (features.rows() < 2) throw ParameterError("Frechet distance needs at least two samples");
  if (features.cols() != mean_.size()) {
    throw ShapeError("Frechet distance between features of dimension " + std::to_string(mean_.size()) + " and " +
                     std::to_string(features.cols()));
  }
  const Eigen::VectorXd mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered =
      (features.rowwise() - mean.transpose()) / std::sqrt(static_cast<double>(features.rows() - 1));
  const Eigen::MatrixXd cross = centered_ * centered.transpose();
  // Singular values directly; square roots of eigenvalues of cross * cross^T
  // would turn rounding noise in the null space into errors of order 1e-8.
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(cross);
  const double trace_sqrt = svd.singularValues().sum();
  const double value = (mean_ - mean).squaredNorm() + trace_ + centered.squaredNorm() - 2.0 * trace_sqrt;
  if (!std::isfinite(value)) throw NumericalError("Frechet distance is not finite");
  return std::max(value, 0.0);
}

SegmentationScores oracle_segmentation_scores(const LatentImage& generated, const LabelMask& mask,
                                              const Eigen::MatrixXd& prototypes) {
  if (prototypes.cols() != generated.channels()) {
    throw ShapeError("class prototypes have " + std::to_string(prototypes.cols()) + " channels, latent has " +
                     std::to_string(generated.channels()));
  }
  const LabelMask tokens = downsample_mask(mask, generated.height(), generated.width());
  const auto classes = static_cast<std::size_t>(prototypes.rows());
  std::vector<std::size_t> inter(classes, 0), gt(classes, 0), pred(classes, 0);
  std::size_t correct = 0, total = 0;
  for (int y = 0; y < generated.height(); ++y) {
    for (int x = 0; x < generated.width(); ++x) {
      const int truth = tokens.at(y, x);
      if (truth == tokens.ignore_id()) continue;
      if (truth < 0 || static_cast<std::size_t>(truth) >= classes) {
        throw DataError("mask class " + std::to_string(truth) + " has no prototype");
      }
      const auto token = generated.token(y, x);
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < classes; ++k) {
        double d = 0.0;
        for (int c = 0; c < generated.channels(); ++c) {
          const double diff = token[c] - prototypes(static_cast<Eigen::Index>(k), c);
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      ++total;
      ++gt[truth];
      ++pred[best];
      if (best == static_cast<std::size_t>(truth)) {
        ++correct;
        ++inter[best];
      }
    }
  }
  SegmentationScores scores;
  if (total == 0) return scores;
  scores.acc = static_cast<double>(correct) / static_cast<double>(total);
  double iou_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (gt[k] == 0) continue;
    ++present;
    iou_sum += static_cast<double>(inter[k]) / static_cast<double>(gt[k] + pred[k] - inter[k]);
  }
  scores.miou = iou_sum / static_cast<double>(present);
  return scores;
}

double batch_diversity(std::span<const LatentImage> latents) {
  if (latents.size() < 2) throw ParameterError("diversity needs at least two latents");
  const double dim = static_cast<double>(latents[0].size());
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (!latents[i].same_shape(latents[0])) throw ShapeError("diversity batch mixes latent shapes");
    for (std::size_t j = i + 1; j < latents.size(); ++j) {
      const auto a = latents[i].data();
      const auto b = latents[j].data();
      double sq = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
      sum += std::sqrt(sq / dim);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

std::vector<std::size_t> furthest_point_sampling(const Eigen::MatrixXd& features, std::size_t k,
                                                 std::size_t start_index) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (k > n) throw ParameterError("cannot select " + std::to_string(k) + " of " + std::to_string(n) + " points");
  if (k == 0) return {};
  if (start_index >= n) throw ParameterError("start index " + std::to_string(start_index) + " out of range");
  std::vector<std::size_t> selected{start_index};
  std::vector<bool> taken(n, false);
  taken[start_index] = true;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t last = start_index;
  while (selected.size() < k) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = (features.row(static_cast<Eigen::Index>(i)) - features.row(static_cast<Eigen::Index>(last))).squaredNorm();
      nearest[i] = std::min(nearest[i], d);
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    taken[best] = true;
    selected.push_back(best);
    last = best;
  }
  return selected;
}

}  // namespace scp
