#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "scp/error.hpp"
#include "scp/estimation.hpp"
#include "scp/rng.hpp"
#include "scp/sampling.hpp"
#include "scp/toy_corpus.hpp"
#include "scp/toy_denoiser.hpp"
#include "test_util.hpp"

using namespace scp;

namespace {

DenoiserConfig quick_config(int steps) {
  DenoiserConfig c;
  c.steps = steps;
  c.hidden = 32;
  c.heldout_images = 32;
  return c;
}

// One small trained model shared by the tests below.
const TrainingResult& trained() {
  static const TrainingResult result = [] {
    const auto corpus = make_toy_corpus(300, 5, 91);
    return train_toy_denoiser(corpus, ScheduleParams{}, 5, quick_config(1500), 92);
  }();
  return result;
}

}  // namespace

TEST_CASE("toy world parameters") {
  const auto w = ToyWorld::make(5);
  CHECK(w.base.rows() == 5);
  CHECK(w.mask_height() == 64);
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) {
      // Base separation in the max norm is at least four times the jitter scale.
      CHECK((w.base.row(a) - w.base.row(b)).cwiseAbs().maxCoeff() >= 4.0 * w.jitter_scale);
    }
  }
  CHECK(w.presence(0) == 1.0);
  CHECK(w.presence(4) < w.presence(3));
  CHECK_THROWS_AS(ToyWorld::make(0), ParameterError);
  const auto big = ToyWorld::make(256);
  std::set<std::vector<double>> codes;
  for (int c = 0; c < 256; ++c) codes.insert({big.base.row(c).begin(), big.base.row(c).end()});
  CHECK(codes.size() == 256);
}

TEST_CASE("toy corpus is deterministic and prefix-stable") {
  const auto a = make_toy_corpus(20, 5, 93);
  const auto b = make_toy_corpus(20, 5, 93);
  const auto longer = make_toy_corpus(30, 5, 93);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].latent == b[i].latent);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].latent == longer[i].latent);
  }
  CHECK_FALSE(make_toy_corpus(1, 5, 94)[0].latent == a[0].latent);
  CHECK(a[3].id == "toy_000003");
}

TEST_CASE("toy layouts: sky on top, road at the bottom, masks consistent with regions") {
  const auto world = ToyWorld::make(5);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto scene = make_toy_scene(world, 95, i);
    const auto& m = scene.record.mask;
    REQUIRE(m.height() == 64);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(63, 0) == 1);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) REQUIRE((m.at(y, x) >= 0 && m.at(y, x) < 5));
    const auto& top = scene.regions.back();
    CHECK(m.at(top.y0, top.x0) == top.class_id);
    CHECK(scene.record.latent.height() == 16);
  }
}

TEST_CASE("property: per-class token values centre on the base code over 1000 records") {
  const auto world = ToyWorld::make(5);
  std::vector<std::vector<double>> per_record(5 * 4);
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto scene = make_toy_scene(world, 96, i);
    const auto tokens = downsample_mask(scene.record.mask, 16, 16);
    std::vector<double> sum(5 * 4, 0.0);
    std::vector<int> count(5, 0);
    for (int y = 0; y < 16; ++y) {
      const double ramp = 2.0 * y / 15.0 - 1.0;
      for (int x = 0; x < 16; ++x) {
        const int c = tokens.at(y, x);
        ++count[c];
        for (int ch = 0; ch < 4; ++ch) {
          sum[c * 4 + ch] += scene.record.latent.at(y, x, ch) - world.gradient(c, ch) * ramp;
        }
      }
    }
    for (int c = 0; c < 5; ++c)
      if (count[c] > 0)
        for (int ch = 0; ch < 4; ++ch) per_record[c * 4 + ch].push_back(sum[c * 4 + ch] / count[c]);
  }
  for (int c = 0; c < 5; ++c) {
    for (int ch = 0; ch < 4; ++ch) {
      const auto& v = per_record[c * 4 + ch];
      REQUIRE(v.size() >= 30);
      double mean = 0.0, sq = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      for (double x : v) sq += (x - mean) * (x - mean);
      const double se = std::sqrt(sq / (v.size() - 1) / v.size());
      CHECK(std::abs(mean - world.base(c, ch)) <= 4.0 * se + 1e-6);
      // Every token stays within the jitter budget of its class code.
      for (double x : v) CHECK(std::abs(x - world.base(c, ch)) <= world.jitter_scale + 1e-6);
    }
  }
}

TEST_CASE("rare classes appear at their configured rate") {
  const auto world = ToyWorld::make(5);
  int seen3 = 0;
  const int n = 2000;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    for (const auto& r : make_toy_scene(world, 97, i).regions) seen3 += r.class_id == 3;
  }
  const double p = world.presence(3);
  CHECK(std::abs(seen3 / static_cast<double>(n) - p) <= 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("analytic gradient matches central finite differences") {
  const auto start = std::chrono::steady_clock::now();
  ToyDenoiser model(4, 5, 8, 2, ScheduleParams{});
  model.initialize(98);
  // Perturb the biases away from zero so every parameter gets a gradient.
  Eigen::VectorXd p = model.parameters();
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 0.1);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += n(rng);
  model.set_parameters(p);

  const auto corpus = make_toy_corpus(4, 5, 100);
  const auto batch = sample_batch(model, corpus, 4, 8, 101);
  Eigen::VectorXd grad;
  model.loss(batch.inputs, batch.targets, &grad);
  REQUIRE(static_cast<std::size_t>(grad.size()) == model.parameter_count());

  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Eigen::VectorXd q = p;
    q(i) = p(i) + h;
    model.set_parameters(q);
    const double up = model.loss(batch.inputs, batch.targets, nullptr);
    q(i) = p(i) - h;
    model.set_parameters(q);
    const double down = model.loss(batch.inputs, batch.targets, nullptr);
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst <= 1e-4);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("training is deterministic and beats the zero predictor") {
  const auto corpus = make_toy_corpus(60, 5, 102);
  const auto a = train_toy_denoiser(corpus, ScheduleParams{}, 5, quick_config(150), 103);
  const auto b = train_toy_denoiser(corpus, ScheduleParams{}, 5, quick_config(150), 103);
  CHECK(a.model == b.model);
  CHECK(a.heldout_loss == b.heldout_loss);

  const auto& r = trained();
  // The zero predictor scores the noise energy, C per token.
  CHECK(r.baseline_loss == doctest::Approx(4.0).epsilon(0.15));
  CHECK(r.heldout_loss < 0.5 * r.baseline_loss);
  CHECK(r.final_loss < 0.5 * r.baseline_loss);
  CHECK(r.model.baseline_loss == r.baseline_loss);
}

TEST_CASE("divergent training raises TrainingError") {
  const auto corpus = make_toy_corpus(20, 5, 104);
  auto config = quick_config(50);
  config.learning_rate = 1e200;
  config.final_learning_rate = 1e200;
  config.grad_clip = 1e300;
  CHECK_THROWS_AS(train_toy_denoiser(corpus, ScheduleParams{}, 5, config, 105), TrainingError);
}

TEST_CASE("trained model predicts the noise at the last timestep") {
  const auto& model = trained().model;
  const auto& s = model.schedule();
  const int t = s.total_steps();
  const auto records = make_toy_corpus(ToyWorld::make(5), 20, 91, 5000);
  double err = 0.0, energy = 0.0, norm = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto rng = make_rng(106, {i});
    const auto eps = normal_latent(16, 16, 4, rng);
    const auto xt = forward_noise(records[i].latent, t, eps, s);
    const auto pred = model.predict(xt, t, downsample_mask(records[i].mask, 16, 16));
    for (std::size_t j = 0; j < eps.size(); ++j) {
      err += (pred.data()[j] - eps.data()[j]) * (pred.data()[j] - eps.data()[j]);
      energy += eps.data()[j] * eps.data()[j];
    }
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        double sq = 0.0;
        for (int c = 0; c < 4; ++c) sq += pred.at(y, x, c) * pred.at(y, x, c);
        norm += std::sqrt(sq);
        ++tokens;
      }
    }
  }
  CHECK(err < 0.25 * energy);
  // Mean token norm of the prediction is close to that of a standard normal C-vector.
  CHECK(norm / tokens == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("joint and normal initializations give different samples from the same seed") {
  const auto& model = trained().model;
  const auto corpus = make_toy_corpus(200, 5, 107);
  const auto bank = estimate_priors(corpus, 5);
  const auto& s = model.schedule();
  const auto plan = make_timestep_plan(0.85, 18, s);
  const Denoiser fn = [&model](const LatentImage& x, int t, const LabelMask& m) { return model.predict(x, t, m); };
  const auto& mask = corpus[0].mask;
  const auto joint = generate(bank, mask, PriorKind::joint, plan, fn, s, 108, {UnknownClassPolicy::spatial});
  const auto normal = generate(bank, mask, PriorKind::normal, plan, fn, s, 108);
  CHECK_FALSE(joint == normal);
  CHECK(joint == generate(bank, mask, PriorKind::joint, plan, fn, s, 108, {UnknownClassPolicy::spatial}));
}

TEST_CASE("denoiser save and load round trip") {
  const auto& model = trained().model;
  testutil::TempDir dir("denoiser");
  model.save(dir / "model.scpd");
  const auto back = ToyDenoiser::load(dir / "model.scpd");
  CHECK(back == model);
  CHECK(back.heldout_loss == model.heldout_loss);
  CHECK(back.schedule_params().steps == model.schedule_params().steps);

  const auto rec = make_toy_corpus(1, 5, 109)[0];
  const auto tokens = downsample_mask(rec.mask, 16, 16);
  CHECK(back.predict(rec.latent, 50, tokens) == model.predict(rec.latent, 50, tokens));

  auto bytes = model.encode();
  bytes[bytes.size() / 2] ^= std::byte{1};
  CHECK_THROWS_AS(ToyDenoiser::decode(bytes), FormatError);
  CHECK_THROWS_AS(ToyDenoiser::load(dir / "missing.scpd"), IoError);
}
