#include "scp/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "scp/error.hpp"
#include "scp/rng.hpp"

namespace scp {

namespace {

constexpr double kLevels[] = {-1.5, -0.5, 0.5, 1.5};

// Shares of the jitter budget; they sum to one.
constexpr double kOffsetShare = 0.45;
constexpr double kGradientShare = 0.30;
constexpr double kNoiseShare = 0.25;

// Object classes get rarer with their id, giving the corpus a long tail.
constexpr double kObjectPresence = 0.7;
constexpr double kObjectDecay = 0.1;

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

ToyWorld ToyWorld::make(int num_classes) {
  if (num_classes < 1 || num_classes > 256) throw ParameterError("toy worlds support 1 to 256 classes");
  ToyWorld w;
  w.num_classes = num_classes;
  w.base.resize(num_classes, w.channels);
  w.gradient.resize(num_classes, w.channels);
  w.presence.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    // 97 is odd, so c -> 97c + 13 (mod 256) is a bijection and codes never repeat.
    const int code = (97 * c + 13) % 256;
    w.presence(c) = c < 3 ? 1.0 : kObjectPresence * std::pow(kObjectDecay, c - 3);
    for (int ch = 0; ch < w.channels; ++ch) {
      const int digit = (code >> (2 * ch)) & 3;
      w.base(c, ch) = kLevels[digit];
      w.gradient(c, ch) = ((code >> ch) & 1 ? 1.0 : -1.0) * kGradientShare * w.jitter_scale;
    }
  }
  return w;
}

ToyScene make_toy_scene(const ToyWorld& world, std::uint64_t seed, std::size_t index) {
  auto layout = make_rng(seed, {kStreamLayout, index});
  auto jitter = make_rng(seed, {kStreamJitter, index});
  const int mh = world.mask_height();
  const int mw = world.mask_width();
  const int k = world.num_classes;

  ToyScene scene;
  // Street-like layout: class 0 on top, class 1 at the bottom, class 2 between,
  // remaining classes as rectangles over the middle band.
  const int horizon = uniform_int(layout, mh * 3 / 16, mh * 7 / 16);
  const int ground = uniform_int(layout, mh * 10 / 16, mh * 27 / 32);
  scene.regions.push_back({0, 0, 0, mh, mw});
  if (k >= 2) scene.regions.push_back({1, ground, 0, mh, mw});
  if (k >= 3) scene.regions.push_back({2, horizon, 0, ground, mw});
  if (k == 2) scene.regions.back().y0 = horizon;
  for (int c = 3; c < k; ++c) {
    if (std::bernoulli_distribution(world.presence(c))(layout)) {
      const int h = uniform_int(layout, mh / 10, mh / 3);
      const int w = uniform_int(layout, mw / 10, mw * 3 / 8);
      const int lo = std::max(0, horizon - mh / 16);
      const int y0 = uniform_int(layout, lo, std::max(lo, mh - mh / 16 - h));
      const int x0 = uniform_int(layout, 0, mw - w);
      scene.regions.push_back({c, y0, x0, std::min(mh, y0 + h), x0 + w});
    }
  }

  LabelMask mask(mh, mw, 0);
  for (const auto& r : scene.regions) {
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) mask.at(y, x) = r.class_id;
    }
  }

  const double j = world.jitter_scale;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  scene.class_offset.resize(k, world.channels);
  for (int c = 0; c < k; ++c) {
    for (int ch = 0; ch < world.channels; ++ch) scene.class_offset(c, ch) = kOffsetShare * j * unit(jitter);
  }

  const LabelMask tokens = downsample_mask(mask, world.latent_height, world.latent_width);
  LatentImage latent(world.latent_height, world.latent_width, world.channels);
  for (int y = 0; y < world.latent_height; ++y) {
    const double ramp = world.latent_height == 1 ? 0.0 : 2.0 * y / (world.latent_height - 1) - 1.0;
    for (int x = 0; x < world.latent_width; ++x) {
      const int c = tokens.at(y, x);
      for (int ch = 0; ch < world.channels; ++ch) {
        const double v = world.base(c, ch) + scene.class_offset(c, ch) + world.gradient(c, ch) * ramp +
                         kNoiseShare * j * unit(jitter);
        // Stored at float32 precision so in-memory and on-disk corpora agree bit for bit.
        latent.at(y, x, ch) = static_cast<double>(static_cast<float>(v));
      }
    }
  }

  char id[32];
  std::snprintf(id, sizeof(id), "toy_%06zu", index);
  scene.record = CorpusRecord{std::move(latent), std::move(mask), id};
  return scene;
}

std::vector<CorpusRecord> make_toy_corpus(const ToyWorld& world, std::size_t n, std::uint64_t seed,
                                          std::size_t first_index) {
  std::vector<CorpusRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_toy_scene(world, seed, first_index + i).record);
  return out;
}

std::vector<CorpusRecord> make_toy_corpus(std::size_t n, int num_classes, std::uint64_t seed) {
  if (n < 1) throw ParameterError("toy corpus needs at least one record");
  return make_toy_corpus(ToyWorld::make(num_classes), n, seed);
}

}  // namespace scp
