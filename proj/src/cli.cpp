#include "scp/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "scp/corpus.hpp"
#include "scp/error.hpp"
#include "scp/estimation.hpp"
#include "scp/metrics.hpp"
#include "scp/npy.hpp"
#include "scp/parallel.hpp"
#include "scp/prior_bank.hpp"
#include "scp/rng.hpp"
#include "scp/sampling.hpp"
#include "scp/study.hpp"
#include "scp/toy_corpus.hpp"
#include "scp/toy_denoiser.hpp"

namespace scp {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kSubcommands = {"estimate",  "sample",      "generate",        "train-toy",    "sweep-mu",
                                               "eval",      "fps-select",  "make-toy-corpus", "dump-schedule"};
const std::vector<std::string> kGlobalKeys = {"seed", "jobs"};

// Options registered through Params are echoed into the resolved config.
class Params {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& var, const std::string& help) {
    entries_.push_back({name, [&var] { return json(var); }});
    return app->add_option("--" + name, var, help)->capture_default_str();
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, bool& var, const std::string& help) {
    entries_.push_back({name, [&var] { return json(var); }});
    return app->add_flag("--" + name, var, help);
  }
  void resolve(json& out) const {
    for (const auto& e : entries_) out[e.name] = e.value();
  }

 private:
  struct Entry {
    std::string name;
    std::function<json()> value;
  };
  std::vector<Entry> entries_;
};

struct Globals {
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct Context {
  Globals globals;
  std::ostream& out;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

void write_config(const fs::path& path, const json& config) { write_text(path, config.dump(2) + "\n"); }

fs::path config_beside(const fs::path& output) { return fs::path(output.string() + ".config.json"); }

fs::path existing_manifest(const std::string& path) {
  const fs::path resolved = resolve_data_path(path);
  if (!fs::is_regular_file(resolved)) throw ParameterError("manifest not found: " + path);
  return resolved;
}

UnknownClassPolicy parse_policy(const std::string& name) {
  if (name == "error") return UnknownClassPolicy::error;
  if (name == "spatial") return UnknownClassPolicy::spatial;
  throw ParameterError("--fallback-unknown must be error or spatial, got '" + name + "'");
}

Denoiser as_denoiser(const ToyDenoiser& model) {
  return [&model](const LatentImage& x, int t, const LabelMask& m) { return model.predict(x, t, m); };
}

// Clamps the requested plan length to what the truncated trajectory can hold.
TimestepPlan plan_for(double mu, int substeps, const NoiseSchedule& schedule) {
  validate_mu(mu);
  if (substeps < 1) throw ParameterError("--substeps must be at least 1");
  const int top = schedule.truncation_step(mu);
  const int n = top == 0 ? 1 : std::clamp(substeps, 2, top + 1);
  return make_timestep_plan(mu, n, schedule);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.precision(std::numeric_limits<double>::max_digits10);
  s << v;
  return s.str();
}

// --- subcommands -----------------------------------------------------------

struct MakeToyCorpus {
  std::size_t n = 0;
  int classes = 5;
  std::size_t holdout = 0;
  std::string out;
  std::string manifest_name = "manifest.tsv";
  std::string holdout_name = "heldout.tsv";

  void bind(CLI::App* app, Params& p) {
    p.add(app, "n", n, "Number of training records")->required();
    p.add(app, "classes", classes, "Number of classes");
    p.add(app, "holdout", holdout, "Extra records written to a separate manifest");
    p.add(app, "out", out, "Output directory")->required();
    p.add(app, "manifest-name", manifest_name, "Manifest file name");
    p.add(app, "holdout-name", holdout_name, "Held-out manifest file name");
  }

  void run(Context& ctx, const json& config) const {
    if (n < 1) throw ParameterError("--n must be at least 1");
    const ToyWorld world = ToyWorld::make(classes);
    write_corpus(out, manifest_name, make_toy_corpus(world, n, ctx.globals.seed));
    ctx.out << "wrote " << n << " records to " << (fs::path(out) / manifest_name).string() << "\n";
    if (holdout > 0) {
      write_corpus(out, holdout_name, make_toy_corpus(world, holdout, ctx.globals.seed, n));
      ctx.out << "wrote " << holdout << " records to " << (fs::path(out) / holdout_name).string() << "\n";
    }
    write_config(fs::path(out) / "config.json", config);
  }
};

struct Estimate {
  std::string manifest;
  int classes = 0;
  int fallback_min = kDefaultFallbackMinCount;
  int ignore_id = kDefaultIgnoreId;
  std::string out;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "manifest", manifest, "Corpus manifest")->required();
    p.add(app, "classes", classes, "Number of classes")->required();
    p.add(app, "fallback-min", fallback_min, "Joint cells with fewer tokens use the class statistics");
    p.add(app, "ignore-id", ignore_id, "Mask id excluded from class statistics");
    p.add(app, "out", out, "Output bank file")->required();
  }

  void run(Context& ctx, const json& config) const {
    if (classes < 1) throw ParameterError("--classes must be at least 1");
    if (fallback_min < 0) throw ParameterError("--fallback-min must be non-negative");
    CorpusReader reader(existing_manifest(manifest), ignore_id);
    const PriorBank bank = estimate_priors(reader, classes, fallback_min, ctx.globals.jobs);
    save_bank(bank, out);
    const auto flagged = std::count(bank.fallback.begin(), bank.fallback.end(), std::uint8_t{1});
    ctx.out << "estimated priors from " << bank.num_records << " records (" << bank.dims.height << "x"
            << bank.dims.width << "x" << bank.dims.channels << ", " << classes << " classes, " << flagged
            << " fallback cells) -> " << out << "\n";
    write_config(config_beside(out), config);
  }
};

struct ScheduleFlags {
  int steps = kDefaultSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;

  void bind(CLI::App* app, Params& p, const std::string& steps_name = "steps") {
    p.add(app, steps_name, steps, "Diffusion steps T");
    p.add(app, "beta-start", beta_start, "First beta of the scaled-linear schedule");
    p.add(app, "beta-end", beta_end, "Last beta of the scaled-linear schedule");
  }
  NoiseSchedule build() const { return build_schedule(steps, beta_start, beta_end); }
};

struct Sample {
  std::string bank;
  std::string mask;
  std::string kind = "joint";
  double mu = kDefaultMu;
  int substeps = 50;
  std::string denoiser;
  std::string fallback_unknown = "error";
  ScheduleFlags schedule;
  std::string out;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "bank", bank, "Prior bank")->required()->check(CLI::ExistingFile);
    p.add(app, "mask", mask, "Label mask (.npy)")->required()->check(CLI::ExistingFile);
    p.add(app, "kind", kind, "normal, spatial, categorical or joint");
    p.add(app, "mu", mu, "Truncation fraction");
    p.add(app, "substeps", substeps, "Timesteps of the denoising plan (with --denoiser)");
    p.add(app, "denoiser", denoiser, "Denoise the initialization with this model")->check(CLI::ExistingFile);
    p.add(app, "fallback-unknown", fallback_unknown, "error or spatial");
    schedule.bind(app, p);
    p.add(app, "out", out, "Output latent (.npy)")->required();
  }

  void run(Context& ctx, const json& config) const {
    const PriorKind k = parse_prior_kind(kind);
    const AssembleOptions opts{parse_policy(fallback_unknown), kVarianceFloor};
    validate_mu(mu);
    const PriorBank b = load_bank(bank);
    const LabelMask m = read_mask(mask);
    const DistributionMap map = k == PriorKind::normal ? normal_map(b.dims.height, b.dims.width, b.dims.channels)
                                                       : assemble_map(b, m, k, opts);
    LatentImage result;
    if (denoiser.empty()) {
      const NoiseSchedule s = schedule.build();
      result = sample_init(map, mu, s, ctx.globals.seed);
      ctx.out << "sampled " << kind << " initialization at t=" << s.truncation_step(mu) << "\n";
    } else {
      const ToyDenoiser model = ToyDenoiser::load(denoiser);
      const TimestepPlan plan = plan_for(mu, substeps, model.schedule());
      result = generate(map, m, plan, as_denoiser(model), model.schedule(), ctx.globals.seed);
      ctx.out << "generated from " << kind << " prior over " << plan.transitions() << " DDIM steps\n";
    }
    write_latent(out, result);
    write_config(config_beside(out), config);
  }
};

struct Generate {
  std::string bank;
  std::string denoiser;
  std::string manifest;
  std::string kind = "joint";
  double mu = kDefaultMu;
  int substeps = 50;
  int per_mask = 1;
  std::string fallback_unknown = "error";
  std::string out_dir;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "bank", bank, "Prior bank")->required()->check(CLI::ExistingFile);
    p.add(app, "denoiser", denoiser, "Toy denoiser")->required()->check(CLI::ExistingFile);
    p.add(app, "manifest", manifest, "Records whose masks condition generation")->required();
    p.add(app, "kind", kind, "normal, spatial, categorical or joint");
    p.add(app, "mu", mu, "Truncation fraction");
    p.add(app, "substeps", substeps, "Timesteps of the denoising plan");
    p.add(app, "per-mask", per_mask, "Samples per mask");
    p.add(app, "fallback-unknown", fallback_unknown, "error or spatial");
    p.add(app, "out-dir", out_dir, "Output directory")->required();
  }

  void run(Context& ctx, const json& config) const {
    if (per_mask < 1) throw ParameterError("--per-mask must be at least 1");
    const PriorKind k = parse_prior_kind(kind);
    const AssembleOptions opts{parse_policy(fallback_unknown), kVarianceFloor};
    const PriorBank b = load_bank(bank);
    const ToyDenoiser model = ToyDenoiser::load(denoiser);
    const auto records = load_corpus(existing_manifest(manifest));
    const TimestepPlan plan = plan_for(mu, substeps, model.schedule());
    const Denoiser fn = as_denoiser(model);
    std::vector<DistributionMap> maps;
    for (const auto& r : records) {
      maps.push_back(k == PriorKind::normal ? normal_map(b.dims.height, b.dims.width, b.dims.channels)
                                            : assemble_map(b, r.mask, k, opts));
    }
    const auto per = static_cast<std::size_t>(per_mask);
    std::vector<LatentImage> outputs(records.size() * per);
    parallel_for(outputs.size(), ctx.globals.jobs, [&](std::size_t j) {
      const std::size_t i = j / per;
      const auto seed = derive_seed(ctx.globals.seed, {kStreamEvaluation, i, j % per});
      outputs[j] = generate(maps[i], records[i].mask, plan, fn, model.schedule(), seed);
    });
    fs::create_directories(out_dir);
    for (std::size_t j = 0; j < outputs.size(); ++j) {
      const auto name = records[j / per].id + "__" + std::to_string(j % per) + ".npy";
      write_latent(fs::path(out_dir) / name, outputs[j]);
    }
    ctx.out << "generated " << outputs.size() << " latents (" << kind << " prior, mu=" << mu << ", "
            << plan.transitions() << " DDIM steps) in " << out_dir << "\n";
    write_config(fs::path(out_dir) / "config.json", config);
  }
};

struct TrainToy {
  std::size_t n = 2000;
  int classes = 5;
  std::string manifest;
  ScheduleFlags schedule{200};
  DenoiserConfig cfg;
  std::string out;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "n", n, "Toy records to train on (ignored with --manifest)");
    p.add(app, "classes", classes, "Number of classes");
    p.add(app, "manifest", manifest, "Train on this corpus instead of a fresh toy corpus");
    schedule.bind(app, p, "diffusion-steps");
    p.add(app, "train-steps", cfg.steps, "SGD steps");
    p.add(app, "hidden", cfg.hidden, "Hidden width");
    p.add(app, "blocks", cfg.blocks, "Residual blocks");
    p.add(app, "batch-images", cfg.batch_images, "Records per batch");
    p.add(app, "tokens-per-image", cfg.tokens_per_image, "Tokens drawn per record");
    p.add(app, "lr", cfg.learning_rate, "Initial learning rate");
    p.add(app, "final-lr", cfg.final_learning_rate, "Learning rate at the last step");
    p.add(app, "momentum", cfg.momentum, "SGD momentum");
    p.add(app, "grad-clip", cfg.grad_clip, "Gradient norm clip");
    p.add(app, "holdout-fraction", cfg.holdout_fraction, "Share of records held out for the loss check");
    p.add(app, "out", out, "Output model file")->required();
  }

  void run(Context& ctx, const json& config) const {
    std::vector<CorpusRecord> corpus;
    if (manifest.empty()) {
      if (n < 1) throw ParameterError("--n must be at least 1");
      corpus = make_toy_corpus(ToyWorld::make(classes), n, ctx.globals.seed);
    } else {
      corpus = load_corpus(existing_manifest(manifest));
    }
    const ScheduleParams params{schedule.steps, schedule.beta_start, schedule.beta_end};
    const TrainingResult result = train_toy_denoiser(corpus, params, classes, cfg, ctx.globals.seed);
    result.model.save(out);
    ctx.out << "trained on " << corpus.size() << " records: final loss " << result.final_loss << ", held-out "
            << result.heldout_loss << ", zero-predictor " << result.baseline_loss << " -> " << out << "\n";
    write_config(config_beside(out), config);
  }
};

struct SweepMu {
  std::string denoiser;
  std::string bank;
  std::string manifest;
  std::string grid = "0:1:0.05";
  int substeps = 20;
  std::string fallback_unknown = "error";
  std::string out;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "denoiser", denoiser, "Toy denoiser")->required()->check(CLI::ExistingFile);
    p.add(app, "bank", bank, "Prior bank")->required()->check(CLI::ExistingFile);
    p.add(app, "manifest", manifest, "Held-out real records")->required();
    p.add(app, "grid", grid, "start:stop:step");
    p.add(app, "substeps", substeps, "DDIM steps of a full trajectory; truncated ones scale with mu");
    p.add(app, "fallback-unknown", fallback_unknown, "error or spatial");
    p.add(app, "out", out, "Output TSV")->required();
  }

  void run(Context& ctx, const json& config) const {
    const auto mus = parse_grid(grid);
    const ToyDenoiser model = ToyDenoiser::load(denoiser);
    const PriorBank b = load_bank(bank);
    const auto records = load_corpus(existing_manifest(manifest));
    StudyOptions opts;
    opts.substeps = substeps;
    opts.seed = ctx.globals.seed;
    opts.jobs = ctx.globals.jobs;
    opts.assemble.unknown_class = parse_policy(fallback_unknown);
    const auto rows = empirical_mismatch_study(model, records, b, mus, opts);
    std::ostringstream tsv;
    write_study_tsv(tsv, rows);
    write_text(out, tsv.str());
    const auto best = std::min_element(rows.begin(), rows.end(),
                                       [](const StudyRow& a, const StudyRow& c) { return a.fid_joint < c.fid_joint; });
    ctx.out << "swept " << rows.size() << " values of mu over " << records.size()
            << " records; joint prior best at mu=" << best->mu << " (FID " << best->fid_joint << ") -> " << out
            << "\n";
    write_config(config_beside(out), config);
  }
};

struct Eval {
  std::string real;
  std::string gen;
  std::string bank;
  std::string prototypes = "toy";
  std::string report;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "real", real, "Manifest of the conditioning records")->required();
    p.add(app, "gen", gen, "Directory of <id>__<k>.npy latents")->required()->check(CLI::ExistingDirectory);
    p.add(app, "bank", bank, "Prior bank (dimensions and class count)")->required()->check(CLI::ExistingFile);
    p.add(app, "prototypes", prototypes, "Segmentation prototypes: toy base values or bank class means");
    p.add(app, "report", report, "Output TSV")->required();
  }

  void run(Context& ctx, const json& config) const {
    const PriorBank b = load_bank(bank);
    const auto records = load_corpus(existing_manifest(real));
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < records.size(); ++i) by_id[records[i].id] = i;

    Eigen::MatrixXd protos;
    if (prototypes == "toy") {
      protos = ToyWorld::make(b.dims.num_classes).base;
    } else if (prototypes == "bank") {
      protos = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          b.cat_mean.data(), b.dims.num_classes, b.dims.channels);
    } else {
      throw ParameterError("--prototypes must be toy or bank, got '" + prototypes + "'");
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(gen)) {
      if (entry.is_regular_file() && entry.path().extension() == ".npy") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.size() < 2) throw DataError("need at least two generated latents in " + gen);

    std::vector<LatentImage> generated;
    std::map<std::string, std::vector<LatentImage>> groups;
    double miou = 0.0, acc = 0.0;
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const auto cut = stem.rfind("__");
      const std::string id = cut == std::string::npos ? stem : stem.substr(0, cut);
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("generated latent " + f.filename().string() + " has no record " + id);
      LatentImage latent = read_latent(f);
      const auto seg = oracle_segmentation_scores(latent, records[it->second].mask, protos);
      miou += seg.miou;
      acc += seg.acc;
      groups[id].push_back(latent);
      generated.push_back(std::move(latent));
    }
    std::vector<LatentImage> real_latents;
    for (const auto& r : records) real_latents.push_back(r.latent);
    const double fid = SampleFrechetReference(latent_features(real_latents)).distance(generated);

    double diversity = 0.0;
    std::size_t batches = 0;
    for (const auto& [id, batch] : groups) {
      if (batch.size() < 2) continue;
      diversity += batch_diversity(batch);
      ++batches;
    }
    diversity = batches == 0 ? std::numeric_limits<double>::quiet_NaN() : diversity / static_cast<double>(batches);

    const double n = static_cast<double>(generated.size());
    std::ostringstream tsv;
    tsv << "fid\tmiou\tacc\tdiversity\n"
        << format_double(fid) << '\t' << format_double(miou / n) << '\t' << format_double(acc / n) << '\t'
        << format_double(diversity) << '\n';
    write_text(report, tsv.str());
    ctx.out << "evaluated " << generated.size() << " latents against " << records.size() << " records: FID " << fid
            << ", mIoU " << miou / n << ", Acc " << acc / n << " -> " << report << "\n";
    write_config(config_beside(report), config);
  }
};

struct FpsSelect {
  std::string manifest;
  std::size_t k = 0;
  std::size_t start = 0;
  std::string out;

  void bind(CLI::App* app, Params& p) {
    p.add(app, "manifest", manifest, "Candidate records")->required();
    p.add(app, "k", k, "Records to select")->required();
    p.add(app, "start", start, "Index of the first selected record");
    p.add(app, "out", out, "Manifest of the selected records")->required();
  }

  void run(Context& ctx, const json& config) const {
    const fs::path path = existing_manifest(manifest);
    const auto entries = read_manifest(path);
    const auto records = load_corpus(path);
    std::vector<LatentImage> latents;
    for (const auto& r : records) latents.push_back(r.latent);
    const auto picked = furthest_point_sampling(latent_features(latents), k, start);
    std::ostringstream text;
    for (const auto i : picked) {
      const auto& e = entries[i];
      text << fs::absolute(e.latent_path).lexically_normal().string() << '\t'
           << fs::absolute(e.mask_path).lexically_normal().string() << '\t' << e.id << '\n';
    }
    write_text(out, text.str());
    ctx.out << "selected " << picked.size() << " of " << records.size() << " records -> " << out << "\n";
    write_config(config_beside(out), config);
  }
};

struct DumpSchedule {
  ScheduleFlags schedule;
  std::string out;

  void bind(CLI::App* app, Params& p) {
    schedule.bind(app, p);
    p.add(app, "out", out, "Output file (stdout when empty)");
  }

  void run(Context& ctx, const json& config) const {
    const NoiseSchedule s = schedule.build();
    if (out.empty()) {
      s.dump(ctx.out);
      return;
    }
    std::ostringstream text;
    s.dump(text);
    write_text(out, text.str());
    write_config(config_beside(out), config);
  }
};

// --- config overlay ----------------------------------------------------------

std::vector<std::string> json_to_args(const json& obj, const std::vector<std::string>& keys, bool include) {
  std::vector<std::string> args;
  for (const auto& [key, value] : obj.items()) {
    if (key == "subcommand") continue;
    const bool listed = std::find(keys.begin(), keys.end(), key) != keys.end();
    if (listed != include) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
    } else if (value.is_string()) {
      args.push_back("--" + key);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back("--" + key);
      args.push_back(value.dump());
    } else {
      throw ParameterError("config key '" + key + "' must be a string, number or boolean");
    }
  }
  return args;
}

// Expands `--config FILE` into explicit flags placed before the command-line
// ones, so that flags given on the command line win.
std::vector<std::string> apply_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ParameterError("--config needs a file");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;

  std::ifstream f(config_path);
  if (!f) throw ParameterError("config file not found: " + config_path);
  const json config = json::parse(f);
  if (!config.is_object()) throw ParameterError("config file must hold a JSON object");

  auto sub_pos = std::find_if(rest.begin(), rest.end(), [](const std::string& a) {
    return std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end();
  });
  std::string sub = sub_pos == rest.end() ? "" : *sub_pos;
  if (config.contains("subcommand")) {
    const auto wanted = config.at("subcommand").get<std::string>();
    if (sub.empty()) {
      sub = wanted;
    } else if (sub != wanted) {
      throw ParameterError("config is for '" + wanted + "', not '" + sub + "'");
    }
  }

  std::vector<std::string> expanded = json_to_args(config, kGlobalKeys, true);
  expanded.insert(expanded.end(), rest.begin(), sub_pos);
  if (!sub.empty()) {
    expanded.push_back(sub);
    const auto sub_args = json_to_args(config, kGlobalKeys, false);
    expanded.insert(expanded.end(), sub_args.begin(), sub_args.end());
  }
  if (sub_pos != rest.end()) expanded.insert(expanded.end(), std::next(sub_pos), rest.end());
  return expanded;
}

}  // namespace

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation-conditioned noise priors for latent diffusion", "scp"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", [] {
    return std::string("scp ") + kToolkitVersion + "\nbank format " + std::to_string(kBankFormatVersion) +
           "\ndenoiser format " + std::to_string(kDenoiserFormatVersion) + "\nnpy format 1.0";
  });

  Globals globals;
  Params global_params;
  global_params.add(&app, "seed", globals.seed, "Master seed");
  global_params.add(&app, "jobs", globals.jobs, "Worker threads")->check(CLI::PositiveNumber);
  std::string unused_config;
  app.add_option("--config", unused_config, "JSON file of flags (a resolved config from an earlier run)");

  MakeToyCorpus make_toy;
  Estimate estimate;
  Sample sample;
  Generate gen;
  TrainToy train;
  SweepMu sweep;
  Eval eval;
  FpsSelect fps;
  DumpSchedule dump;

  std::map<std::string, Params> params;
  std::map<std::string, std::function<void(Context&, const json&)>> runners;
  auto add = [&](const std::string& name, const std::string& help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    cmd.bind(sub, params[name]);
    runners[name] = [&cmd](Context& ctx, const json& config) { cmd.run(ctx, config); };
  };
  add("make-toy-corpus", "Write a synthetic corpus of latents, masks and a manifest", make_toy);
  add("estimate", "Estimate spatial, categorical and joint priors from a corpus", estimate);
  add("sample", "Draw a noised prior initialization for one mask", sample);
  add("generate", "Generate latents for every mask of a manifest", gen);
  add("train-toy", "Train the toy denoiser", train);
  add("sweep-mu", "Frechet distance against mu for ground-truth, normal and joint initializations", sweep);
  add("eval", "Score generated latents: FID, oracle mIoU/Acc and diversity", eval);
  add("fps-select", "Pick a diverse subset of records by furthest point sampling", fps);
  add("dump-schedule", "Print the alpha_bar table", dump);

  try {
    std::vector<std::string> args = apply_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e, out, err);
      const auto chosen = app.get_subcommands();
      err << "error: " << e.what() << "\n\n" << (chosen.empty() ? app.help() : chosen.front()->help());
      return kExitUsage;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    json config;
    config["subcommand"] = name;
    global_params.resolve(config);
    params[name].resolve(config);
    Context ctx{globals, out};
    runners.at(name)(ctx, config);
    return kExitOk;
  } catch (const UnknownClassError& e) {
    err << "error: " << e.what() << " (use --fallback-unknown spatial to sample the spatial prior instead)\n";
    return kExitUnknownClass;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: bad config file: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace scp
