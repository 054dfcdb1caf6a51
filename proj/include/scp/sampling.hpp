#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scp/prior_bank.hpp"
#include "scp/schedule.hpp"
#include "scp/tensor.hpp"

namespace scp {

enum class PriorKind { normal, spatial, categorical, joint };

/// Which bank entry a token's Gaussian came from.
enum class Provenance : std::uint8_t { normal, spatial, categorical, joint, joint_fallback };

/// What to do with a mask class the bank never observed.
enum class UnknownClassPolicy { error, spatial };

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kDefaultMu = 0.85;

std::string to_string(PriorKind kind);
/// Accepts "normal", "spatial", "categorical", "joint"; throws ParameterError otherwise.
PriorKind parse_prior_kind(const std::string& name);

/// Per-token diagonal Gaussian over the latent grid.
struct DistributionMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> mean;      // [H'][W'][C]
  std::vector<double> variance;  // [H'][W'][C], >= floor
  std::vector<Provenance> provenance;  // [H'][W']

  friend bool operator==(const DistributionMap&, const DistributionMap&) = default;
};

struct AssembleOptions {
  UnknownClassPolicy unknown_class = UnknownClassPolicy::error;
  double variance_floor = kVarianceFloor;
};

/// N(0, I) everywhere.
DistributionMap normal_map(int height, int width, int channels);

/// Indexes the bank token by token. `mask` may be at latent or pixel resolution;
/// it is downsampled onto the bank grid. Ignore-labeled tokens take the spatial
/// entry. Joint cells flagged as fallback take the class entry. Throws
/// UnknownClassError for classes without statistics unless the policy says otherwise.
DistributionMap assemble_map(const PriorBank& bank, const LabelMask& mask, PriorKind kind,
                             const AssembleOptions& options = {});

/// x_prior ~ N(map.mean, map.variance), then forward-noised to round(mu T) with an
/// independent noise draw. The two draws use separate substreams of `seed`, so the
/// prior sample does not depend on mu.
LatentImage sample_init(const DistributionMap& map, double mu, const NoiseSchedule& schedule, std::uint64_t seed);

/// The un-noised prior draw used by sample_init.
LatentImage sample_prior(const DistributionMap& map, std::uint64_t seed);

/// Predicts the noise in x_t at timestep t for the given token-grid mask.
using Denoiser = std::function<LatentImage(const LatentImage& x_t, int t, const LabelMask& token_mask)>;

/// Runs DDIM along `plan` from `x_start` (which must be at timestep plan.steps.front()).
/// Calls the denoiser exactly plan.transitions() times.
LatentImage denoise(LatentImage x_start, const TimestepPlan& plan, const Denoiser& denoiser,
                    const LabelMask& token_mask, const NoiseSchedule& schedule);

/// sample_init followed by denoise. plan.mu is used as mu.
LatentImage generate(const DistributionMap& map, const LabelMask& mask, const TimestepPlan& plan,
                     const Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed);

LatentImage generate(const PriorBank& bank, const LabelMask& mask, PriorKind kind, const TimestepPlan& plan,
                     const Denoiser& denoiser, const NoiseSchedule& schedule, std::uint64_t seed,
                     const AssembleOptions& options = {});

}  // namespace scp
