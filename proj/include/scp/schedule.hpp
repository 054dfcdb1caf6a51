#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "scp/tensor.hpp"

namespace scp {

/// Cumulative signal-scaling table alpha_bar[0..T] of a diffusion process,
/// alpha_bar[0] = 1 and strictly decreasing afterwards. Immutable once built.
class NoiseSchedule {
 public:
  /// Scaled-linear betas: sqrt(beta) is linearly spaced between sqrt(beta_start)
  /// and sqrt(beta_end) over steps 1..T, and alpha_bar[t] = prod_{s<=t} (1 - beta_s).
  static NoiseSchedule scaled_linear(int total_steps, double beta_start, double beta_end);

  /// Wraps an explicit table after validating the invariants.
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

  int total_steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;
  std::span<const double> alpha_bar_table() const noexcept { return alpha_bar_; }

  /// round(mu * T), the first timestep of a truncated trajectory.
  int truncation_step(double mu) const;

  /// Two-column text table "t<TAB>alpha_bar[t]" with round-trip precision.
  void dump(std::ostream& out) const;

 private:
  explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {}
  std::vector<double> alpha_bar_;
};

inline constexpr int kDefaultSteps = 1000;
inline constexpr double kDefaultBetaStart = 0.00085;
inline constexpr double kDefaultBetaEnd = 0.012;

NoiseSchedule build_schedule(int total_steps = kDefaultSteps, double beta_start = kDefaultBetaStart,
                             double beta_end = kDefaultBetaEnd);

/// sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps.
LatentImage forward_noise(const LatentImage& x0, int t, const LatentImage& eps, const NoiseSchedule& schedule);

/// Deterministic DDIM update from t to t_prev given the predicted noise.
LatentImage ddim_step(const LatentImage& x_t, const LatentImage& eps_hat, int t, int t_prev,
                      const NoiseSchedule& schedule);

/// A draw from N(sqrt(alpha_bar[mu T]) x0, (1 - alpha_bar[mu T]) I) given unit-normal eps.
LatentImage ground_truth_prior_init(const LatentImage& x0, double mu, const LatentImage& eps,
                                    const NoiseSchedule& schedule);

struct TimestepPlan {
  double mu = 0.0;
  std::vector<int> steps;  // strictly decreasing, first = round(mu T), last = 0

  std::size_t transitions() const noexcept { return steps.empty() ? 0 : steps.size() - 1; }
};

/// Evenly spaced timesteps round(mu T) -> 0 with n_substeps entries. Requires
/// 1 <= n_substeps <= round(mu T) + 1, and n_substeps >= 2 whenever round(mu T) > 0.
TimestepPlan make_timestep_plan(double mu, int n_substeps, const NoiseSchedule& schedule);

/// Plan whose density matches a full trajectory of `full_substeps` transitions:
/// round(mu * full_substeps) transitions (at least one when mu T > 0).
TimestepPlan make_proportional_plan(double mu, int full_substeps, const NoiseSchedule& schedule);

void validate_mu(double mu);

}  // namespace scp
