#include "scp/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <string>

#include "scp/error.hpp"

namespace scp {

NoiseSchedule NoiseSchedule::scaled_linear(int total_steps, double beta_start, double beta_end) {
  if (total_steps < 1) throw ParameterError("schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ParameterError("beta range must satisfy 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> alpha_bar(static_cast<std::size_t>(total_steps) + 1);
  alpha_bar[0] = 1.0;
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  for (int s = 1; s <= total_steps; ++s) {
    const double frac = total_steps == 1 ? 0.0 : static_cast<double>(s - 1) / (total_steps - 1);
    const double root = lo + frac * (hi - lo);
    alpha_bar[s] = alpha_bar[s - 1] * (1.0 - root * root);
  }
  return from_alpha_bar(std::move(alpha_bar));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  if (alpha_bar.size() < 2) throw ParameterError("alpha_bar needs at least two entries");
  if (alpha_bar[0] != 1.0) throw ParameterError("alpha_bar[0] must equal 1");
  for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
    const double a = alpha_bar[t];
    if (!std::isfinite(a) || a <= 0.0 || a > 1.0 || !(a < alpha_bar[t - 1])) {
      throw ParameterError("alpha_bar must be strictly decreasing within (0, 1]; violated at t=" +
                           std::to_string(t));
    }
  }
  return NoiseSchedule(std::move(alpha_bar));
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > total_steps()) {
    throw ParameterError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(total_steps()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

int NoiseSchedule::truncation_step(double mu) const {
  validate_mu(mu);
  return static_cast<int>(std::lround(mu * total_steps()));
}

void NoiseSchedule::dump(std::ostream& out) const {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t t = 0; t < alpha_bar_.size(); ++t) out << t << '\t' << alpha_bar_[t] << '\n';
  out.precision(old_precision);
}

NoiseSchedule build_schedule(int total_steps, double beta_start, double beta_end) {
  return NoiseSchedule::scaled_linear(total_steps, beta_start, beta_end);
}

void validate_mu(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ParameterError("mu must lie in [0, 1], got " + std::to_string(mu));
}

LatentImage forward_noise(const LatentImage& x0, int t, const LatentImage& eps, const NoiseSchedule& schedule) {
  if (!x0.same_shape(eps)) throw ShapeError("forward_noise: noise shape differs from latent shape");
  const double ab = schedule.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  LatentImage out = x0;
  auto o = out.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = signal * o[i] + noise * e[i];
  return out;
}

LatentImage ddim_step(const LatentImage& x_t, const LatentImage& eps_hat, int t, int t_prev,
                      const NoiseSchedule& schedule) {
  if (!(t_prev >= 0 && t_prev < t)) {
    throw ParameterError("ddim_step requires 0 <= t_prev < t, got t=" + std::to_string(t) +
                         " t_prev=" + std::to_string(t_prev));
  }
  if (!x_t.same_shape(eps_hat)) throw ShapeError("ddim_step: noise prediction shape differs from latent");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double sqrt_ab_t = std::sqrt(ab_t);
  const double sigma_t = std::sqrt(1.0 - ab_t);
  const double sqrt_ab_prev = std::sqrt(ab_prev);
  const double sigma_prev = std::sqrt(1.0 - ab_prev);
  LatentImage out = x_t;
  auto o = out.data();
  auto e = eps_hat.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x0_hat = (o[i] - sigma_t * e[i]) / sqrt_ab_t;
    o[i] = sqrt_ab_prev * x0_hat + sigma_prev * e[i];
  }
  return out;
}

LatentImage ground_truth_prior_init(const LatentImage& x0, double mu, const LatentImage& eps,
                                    const NoiseSchedule& schedule) {
  return forward_noise(x0, schedule.truncation_step(mu), eps, schedule);
}

TimestepPlan make_timestep_plan(double mu, int n_substeps, const NoiseSchedule& schedule) {
  const int top = schedule.truncation_step(mu);
  if (n_substeps < 1 || n_substeps > top + 1) {
    throw ParameterError("substep count " + std::to_string(n_substeps) + " must lie in [1, " +
                         std::to_string(top + 1) + "] for mu=" + std::to_string(mu));
  }
  if (top > 0 && n_substeps < 2) throw ParameterError("a plan starting above t=0 needs at least 2 substeps");
  TimestepPlan plan;
  plan.mu = mu;
  if (top == 0) {
    plan.steps = {0};
    return plan;
  }
  for (int i = 0; i < n_substeps; ++i) {
    const double remaining = static_cast<double>(n_substeps - 1 - i) / (n_substeps - 1);
    const int step = static_cast<int>(std::lround(top * remaining));
    if (plan.steps.empty() || step < plan.steps.back()) plan.steps.push_back(step);
  }
  return plan;
}

TimestepPlan make_proportional_plan(double mu, int full_substeps, const NoiseSchedule& schedule) {
  if (full_substeps < 1) throw ParameterError("substep count must be positive");
  const int top = schedule.truncation_step(mu);
  if (top == 0) return make_timestep_plan(mu, 1, schedule);
  const long transitions = std::clamp<long>(std::lround(mu * full_substeps), 1, top);
  return make_timestep_plan(mu, static_cast<int>(transitions) + 1, schedule);
}

}  // namespace scp
