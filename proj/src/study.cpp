#include "scp/study.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "scp/error.hpp"
#include "scp/parallel.hpp"
#include "scp/rng.hpp"

namespace scp {

namespace {

Eigen::MatrixXd real_features(std::span<const CorpusRecord> records) {
  std::vector<LatentImage> latents;
  latents.reserve(records.size());
  for (const auto& r : records) latents.push_back(r.latent);
  return latent_features(latents);
}

}  // namespace

std::vector<LatentImage> generate_set(const ToyDenoiser& denoiser, std::span<const CorpusRecord> records,
                                      const PriorBank* bank, InitSource source, double mu,
                                      const StudyOptions& options) {
  const auto& schedule = denoiser.schedule();
  const TimestepPlan plan = make_proportional_plan(mu, options.substeps, schedule);
  const Denoiser fn = [&denoiser](const LatentImage& x, int t, const LabelMask& m) { return denoiser.predict(x, t, m); };
  const bool needs_bank = source.type == InitSource::Type::prior && source.kind != PriorKind::normal;
  if (needs_bank && bank == nullptr) throw ParameterError("prior kind " + to_string(source.kind) + " needs a bank");

  std::vector<LatentImage> out(records.size());
  parallel_for(records.size(), options.jobs, [&](std::size_t i) {
    const auto& record = records[i];
    const auto seed = derive_seed(options.seed, {kStreamEvaluation, i});
    const LabelMask tokens = record.token_mask();
    LatentImage start;
    if (source.type == InitSource::Type::ground_truth) {
      auto rng = make_rng(seed, {kStreamForwardNoise});
      const auto& x0 = record.latent;
      const LatentImage eps = normal_latent(x0.height(), x0.width(), x0.channels(), rng);
      start = ground_truth_prior_init(x0, mu, eps, schedule);
    } else {
      const DistributionMap map =
          needs_bank ? assemble_map(*bank, record.mask, source.kind, options.assemble)
                     : normal_map(record.latent.height(), record.latent.width(), record.latent.channels());
      start = sample_init(map, mu, schedule, seed);
    }
    out[i] = denoise(std::move(start), plan, fn, tokens, schedule);
  });
  return out;
}

SetEvaluator::SetEvaluator(std::span<const CorpusRecord> records, Eigen::MatrixXd prototypes)
    : records_(records), prototypes_(std::move(prototypes)), reference_(real_features(records)) {}

double SetEvaluator::fid(std::span<const LatentImage> generated) const {
  if (generated.size() != records_.size()) throw ShapeError("generated set size differs from the record set");
  return reference_.distance(generated);
}

SetScores SetEvaluator::score(std::span<const LatentImage> generated) const {
  SetScores s;
  s.fid = fid(generated);
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const auto seg = oracle_segmentation_scores(generated[i], records_[i].mask, prototypes_);
    s.miou += seg.miou;
    s.acc += seg.acc;
  }
  s.miou /= static_cast<double>(generated.size());
  s.acc /= static_cast<double>(generated.size());
  return s;
}

std::vector<StudyRow> empirical_mismatch_study(const ToyDenoiser& denoiser, std::span<const CorpusRecord> records,
                                               const PriorBank& bank, std::span<const double> mu_grid,
                                               const StudyOptions& options) {
  const SampleFrechetReference reference(real_features(records));
  std::vector<StudyRow> rows;
  for (double mu : mu_grid) {
    validate_mu(mu);
    StudyRow row;
    row.mu = mu;
    row.fid_gt = reference.distance(generate_set(denoiser, records, &bank, InitSource::ground_truth(), mu, options));
    row.fid_normal = reference.distance(generate_set(denoiser, records, &bank, InitSource::prior(PriorKind::normal), mu, options));
    row.fid_joint = reference.distance(generate_set(denoiser, records, &bank, InitSource::prior(PriorKind::joint), mu, options));
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> parse_grid(const std::string& text) {
  double start = 0, stop = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof()) {
    throw ParameterError("grid must look like start:stop:step, got '" + text + "'");
  }
  if (!(step > 0.0) || stop < start) throw ParameterError("grid needs step > 0 and stop >= start");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    // Snap to 1e-12 so that 0.05 * 17 prints and rounds as 0.85.
    const double mu = std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12;
    validate_mu(mu);
    grid.push_back(mu);
  }
  return grid;
}

void write_study_tsv(std::ostream& out, std::span<const StudyRow> rows) {
  out << "mu\tfid_gt\tfid_normal\tfid_joint\n";
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) out << r.mu << '\t' << r.fid_gt << '\t' << r.fid_normal << '\t' << r.fid_joint << '\n';
  out.precision(old);
}

}  // namespace scp
