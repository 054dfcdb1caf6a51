#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "scp/cli.hpp"
#include "scp/corpus.hpp"
#include "scp/npy.hpp"
#include "scp/prior_bank.hpp"
#include "test_util.hpp"

using namespace scp;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("version, help and usage errors") {
  const auto v = run({"--version"});
  CHECK(v.code == kExitOk);
  CHECK(v.out.find("bank format 1") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"dump-schedule", "--steps", "0"}).code == kExitUsage);
  CHECK(run({"estimate", "--classes", "3"}).code == kExitUsage);
}

TEST_CASE("dump-schedule prints T + 1 rows") {
  const auto r = run({"dump-schedule", "--steps", "5"});
  CHECK(r.code == kExitOk);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 6);
  CHECK(r.out.rfind("0\t1", 0) == 0);
}

TEST_CASE("a missing bank is a usage error and writes nothing") {
  testutil::TempDir dir("cli_missing");
  const auto out = dir / "init.npy";
  const auto r = run({"sample", "--bank", (dir / "nope.scpb").string(), "--mask", (dir / "m.npy").string(),
                      "--out", out.string()});
  CHECK(r.code == kExitUsage);
  CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("end-to-end recipe: corpus, bank, sample, generate, eval") {
  testutil::TempDir dir("cli_e2e");
  const auto d = dir.path();
  REQUIRE(run({"make-toy-corpus", "--n", "40", "--holdout", "4", "--out", (d / "corpus").string(), "--seed", "3"}).code ==
          kExitOk);
  const auto manifest = d / "corpus" / "manifest.tsv";
  REQUIRE(std::filesystem::exists(manifest));
  REQUIRE(std::filesystem::exists(d / "corpus" / "heldout.tsv"));
  CHECK(read_manifest(manifest).size() == 40);

  const auto bank_path = d / "bank.scpb";
  REQUIRE(run({"estimate", "--manifest", manifest.string(), "--classes", "5", "--fallback-min", "4", "--out",
               bank_path.string()})
              .code == kExitOk);
  const auto bank = load_bank(bank_path);
  CHECK(bank.num_records == 40);
  CHECK(std::filesystem::exists(d / "bank.scpb.config.json"));

  const auto first = read_manifest(manifest).front();
  const auto init = d / "init.npy";
  REQUIRE(run({"sample", "--bank", bank_path.string(), "--mask", first.mask_path.string(), "--kind", "joint",
               "--fallback-unknown", "spatial", "--out", init.string()})
              .code == kExitOk);
  CHECK(read_latent(init).height() == 16);

  const auto model = d / "model.scpd";
  REQUIRE(run({"train-toy", "--n", "40", "--train-steps", "20", "--hidden", "8", "--out", model.string()}).code ==
          kExitOk);

  const auto gen = d / "gen";
  REQUIRE(run({"generate", "--bank", bank_path.string(), "--denoiser", model.string(), "--manifest",
               (d / "corpus" / "heldout.tsv").string(), "--per-mask", "2", "--substeps", "5", "--fallback-unknown",
               "spatial", "--out-dir", gen.string()})
              .code == kExitOk);
  CHECK(std::filesystem::exists(gen / "toy_000040__1.npy"));

  const auto report = d / "report.tsv";
  const auto ev = run({"eval", "--real", (d / "corpus" / "heldout.tsv").string(), "--gen", gen.string(), "--bank",
                       bank_path.string(), "--report", report.string()});
  REQUIRE(ev.code == kExitOk);
  const auto text = slurp(report);
  CHECK(text.rfind("fid\tmiou\tacc\tdiversity\n", 0) == 0);

  const auto subset = d / "subset.tsv";
  REQUIRE(run({"fps-select", "--manifest", manifest.string(), "--k", "5", "--out", subset.string()}).code == kExitOk);
  CHECK(read_manifest(subset).size() == 5);
}

TEST_CASE("exit codes for data problems and unknown classes") {
  testutil::TempDir dir("cli_codes");
  const auto d = dir.path();
  REQUIRE(run({"make-toy-corpus", "--n", "5", "--classes", "3", "--out", (d / "c").string()}).code == kExitOk);
  const auto manifest = (d / "c" / "manifest.tsv").string();
  // Masks hold ids up to 2, so two classes is inconsistent data.
  CHECK(run({"estimate", "--manifest", manifest, "--classes", "2", "--out", (d / "x.scpb").string()}).code ==
        kExitData);

  REQUIRE(run({"estimate", "--manifest", manifest, "--classes", "4", "--out", (d / "b.scpb").string()}).code ==
          kExitOk);
  LabelMask mask(64, 64, 3);
  write_mask(d / "m.npy", mask);
  const auto r = run({"sample", "--bank", (d / "b.scpb").string(), "--mask", (d / "m.npy").string(), "--kind",
                      "categorical", "--out", (d / "s.npy").string()});
  CHECK(r.code == kExitUnknownClass);
  CHECK(r.err.find("class 3") != std::string::npos);
}

TEST_CASE("rerunning from a resolved config reproduces the output byte for byte") {
  testutil::TempDir dir("cli_config");
  const auto d = dir.path();
  REQUIRE(run({"make-toy-corpus", "--n", "30", "--out", (d / "c").string(), "--seed", "11"}).code == kExitOk);
  const auto manifest = (d / "c" / "manifest.tsv").string();
  REQUIRE(run({"estimate", "--manifest", manifest, "--classes", "5", "--fallback-min", "3", "--seed", "11", "--out",
               (d / "a.scpb").string()})
              .code == kExitOk);
  const auto config = d / "a.scpb.config.json";
  const auto resolved = nlohmann::json::parse(slurp(config));
  CHECK(resolved.at("subcommand") == "estimate");
  CHECK(resolved.at("fallback-min") == 3);

  REQUIRE(run({"estimate", "--config", config.string(), "--out", (d / "b.scpb").string()}).code == kExitOk);
  CHECK(slurp(d / "a.scpb") == slurp(d / "b.scpb"));

  // Command-line flags override the file.
  REQUIRE(run({"estimate", "--config", config.string(), "--fallback-min", "7", "--out", (d / "c.scpb").string()})
              .code == kExitOk);
  CHECK(load_bank(d / "c.scpb").fallback_min_count == 7);

  CHECK(run({"sample", "--config", config.string()}).code == kExitUsage);
}
