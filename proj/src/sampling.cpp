#include "scp/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "scp/error.hpp"
#include "scp/rng.hpp"

namespace scp {

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::normal: return "normal";
    case PriorKind::spatial: return "spatial";
    case PriorKind::categorical: return "categorical";
    case PriorKind::joint: return "joint";
  }
  return "unknown";
}

PriorKind parse_prior_kind(const std::string& name) {
  if (name == "normal") return PriorKind::normal;
  if (name == "spatial") return PriorKind::spatial;
  if (name == "categorical") return PriorKind::categorical;
  if (name == "joint") return PriorKind::joint;
  throw ParameterError("unknown prior kind '" + name + "' (expected normal, spatial, categorical or joint)");
}

DistributionMap normal_map(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) throw ShapeError("map dimensions must be positive");
  DistributionMap map;
  map.height = height;
  map.width = width;
  map.channels = channels;
  const std::size_t n = static_cast<std::size_t>(height) * width * channels;
  map.mean.assign(n, 0.0);
  map.variance.assign(n, 1.0);
  map.provenance.assign(static_cast<std::size_t>(height) * width, Provenance::normal);
  return map;
}

DistributionMap assemble_map(const PriorBank& bank, const LabelMask& mask, PriorKind kind,
                             const AssembleOptions& options) {
  const auto& d = bank.dims;
  if (kind == PriorKind::normal) return normal_map(d.height, d.width, d.channels);

  const LabelMask tokens = downsample_mask(mask, d.height, d.width);
  DistributionMap map;
  map.height = d.height;
  map.width = d.width;
  map.channels = d.channels;
  map.mean.resize(d.tokens() * d.channels);
  map.variance.resize(map.mean.size());
  map.provenance.resize(d.tokens());

  const auto channels = static_cast<std::size_t>(d.channels);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const std::size_t loc = static_cast<std::size_t>(y) * d.width + x;
      const double* mean = bank.spatial_mean.data() + bank.spatial_index(y, x);
      const double* var = bank.spatial_var.data() + bank.spatial_index(y, x);
      Provenance tag = Provenance::spatial;
      const int cls = tokens.at(y, x);
      if (kind != PriorKind::spatial && cls != tokens.ignore_id()) {
        if (!bank.has_class(cls)) {
          if (options.unknown_class == UnknownClassPolicy::error) throw UnknownClassError(cls);
        } else if (kind == PriorKind::joint && !bank.fallback[bank.joint_cell(y, x, cls)]) {
          const std::size_t off = bank.joint_cell(y, x, cls) * channels;
          mean = bank.joint_mean.data() + off;
          var = bank.joint_var.data() + off;
          tag = Provenance::joint;
        } else {
          mean = bank.cat_mean.data() + bank.class_index(cls);
          var = bank.cat_var.data() + bank.class_index(cls);
          tag = kind == PriorKind::joint ? Provenance::joint_fallback : Provenance::categorical;
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        map.mean[loc * channels + c] = mean[c];
        map.variance[loc * channels + c] = std::max(var[c], options.variance_floor);
      }
      map.provenance[loc] = tag;
    }
  }
  return map;
}

LatentImage sample_prior(const DistributionMap& map, std::uint64_t seed) {
  auto rng = make_rng(seed, {kStreamPrior});
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentImage out(map.height, map.width, map.channels);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = map.mean[i] + std::sqrt(map.variance[i]) * normal(rng);
  return out;
}

LatentImage sample_init(const DistributionMap& map, double mu, const NoiseSchedule& schedule, std::uint64_t seed) {
  const int t = schedule.truncation_step(mu);
  const LatentImage prior = sample_prior(map, seed);
  auto rng = make_rng(seed, {kStreamForwardNoise});
  const LatentImage eps = normal_latent(map.height, map.width, map.channels, rng);
  return forward_noise(prior, t, eps, schedule);
}

LatentImage denoise(LatentImage x, const TimestepPlan& plan, const Denoiser& denoiser, const LabelMask& token_mask,
                    const NoiseSchedule& schedule) {
  if (plan.steps.empty()) throw ParameterError("empty timestep plan");
  for (std::size_t i = 0; i + 1 < plan.steps.size(); ++i) {
    const int t = plan.steps[i];
    LatentImage eps_hat = denoiser(x, t, token_mask);
    if (!eps_hat.same_shape(x)) throw ShapeError("denoiser output shape differs from the latent shape");
    x = ddim_step(x, eps_hat, t, plan.steps[i + 1], schedule);
  }
  return x;
}

LatentImage generate(const DistributionMap& map, const LabelMask& mask, const TimestepPlan& plan,
                     const Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed) {
  if (plan.steps.empty() || plan.steps.front() != schedule.truncation_step(plan.mu)) {
    throw ParameterError("timestep plan does not start at round(mu T)");
  }
  const LabelMask tokens = downsample_mask(mask, map.height, map.width);
  return denoise(sample_init(map, plan.mu, schedule, seed), plan, denoiser, tokens, schedule);
}

LatentImage generate(const PriorBank& bank, const LabelMask& mask, PriorKind kind, const TimestepPlan& plan,
                     const Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed,
                     const AssembleOptions& options) {
  return generate(assemble_map(bank, mask, kind, options), mask, plan, denoiser, schedule, seed);
}

}  // namespace scp
