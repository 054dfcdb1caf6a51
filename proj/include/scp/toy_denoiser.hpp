#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scp/corpus.hpp"
#include "scp/schedule.hpp"

namespace scp {

inline constexpr std::uint32_t kDenoiserFormatVersion = 1;

struct ScheduleParams {
  int steps = 200;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;

  NoiseSchedule build() const { return build_schedule(steps, beta_start, beta_end); }
};

struct DenoiserConfig {
  int hidden = 64;
  int blocks = 2;  // residual blocks after the input layer
  int steps = 6000;
  int batch_images = 8;
  int tokens_per_image = 64;
  double learning_rate = 0.05;
  double final_learning_rate = 0.005;  // linear decay target
  double momentum = 0.9;
  double grad_clip = 5.0;  // global L2 norm
  double holdout_fraction = 0.05;
  int heldout_images = 64;
};

/// Per-token noise predictor: a residual SiLU MLP over the 3x3 token
/// neighbourhood of x_t (zero padded), a one-hot of the token's class and four
/// timestep features. Output is the C-channel noise estimate of the centre token.
class ToyDenoiser {
 public:
  ToyDenoiser() = default;
  ToyDenoiser(int channels, int num_classes, int hidden, int blocks, ScheduleParams schedule);

  int channels() const noexcept { return channels_; }
  int num_classes() const noexcept { return num_classes_; }
  int hidden() const noexcept { return hidden_; }
  int blocks() const noexcept { return static_cast<int>(block_w_.size()); }
  int input_size() const noexcept { return 9 * channels_ + num_classes_ + 4; }
  const ScheduleParams& schedule_params() const noexcept { return schedule_params_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

  void initialize(std::uint64_t seed);

  /// One column per token in row-major token order.
  Eigen::MatrixXd build_inputs(const LatentImage& x_t, int t, const LabelMask& token_mask) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  LatentImage predict(const LatentImage& x_t, int t, const LabelMask& token_mask) const;

  /// Mean over columns of the squared error summed over channels. When
  /// `gradient` is non-null it receives dLoss/dparameters in parameter order.
  double loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, Eigen::VectorXd* gradient) const;

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& params);

  void save(const std::filesystem::path& path) const;
  static ToyDenoiser load(const std::filesystem::path& path);
  std::vector<std::byte> encode() const;
  static ToyDenoiser decode(std::span<const std::byte> bytes);

  // Training record, persisted with the weights.
  double final_loss = 0.0;
  double heldout_loss = 0.0;
  double baseline_loss = 0.0;

  friend bool operator==(const ToyDenoiser& a, const ToyDenoiser& b) {
    return a.channels_ == b.channels_ && a.num_classes_ == b.num_classes_ && a.hidden_ == b.hidden_ &&
           a.blocks() == b.blocks() && a.parameters() == b.parameters();
  }

 private:
  int channels_ = 0;
  int num_classes_ = 0;
  int hidden_ = 0;
  ScheduleParams schedule_params_;
  NoiseSchedule schedule_ = build_schedule(1, 0.5, 0.5);

  Eigen::MatrixXd in_w_;
  Eigen::VectorXd in_b_;
  std::vector<Eigen::MatrixXd> block_w_;
  std::vector<Eigen::VectorXd> block_b_;
  Eigen::MatrixXd out_w_;
  Eigen::VectorXd out_b_;
};

/// A fixed set of (input, target-noise) columns drawn from noised records.
struct TrainingBatch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

/// Draws `images` records with replacement, a uniform t in [1, T] and fresh noise
/// per record, and up to `tokens_per_image` distinct token columns per record.
TrainingBatch sample_batch(const ToyDenoiser& model, std::span<const CorpusRecord> records, int images,
                           int tokens_per_image, std::uint64_t seed);

struct TrainingResult {
  ToyDenoiser model;
  double final_loss = 0.0;     // mean loss over the last 5% of steps
  double heldout_loss = 0.0;   // on a fixed batch from held-out records
  double baseline_loss = 0.0;  // zero predictor on that batch
};

/// SGD with momentum on the noise-prediction loss. Throws TrainingError on a
/// non-finite loss or parameter, naming the step.
TrainingResult train_toy_denoiser(std::span<const CorpusRecord> corpus, const ScheduleParams& schedule,
                                  int num_classes, const DenoiserConfig& config, std::uint64_t seed);

}  // namespace scp
