#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fgaps/digest.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/pipeline.hpp"
#include "fgaps/report.hpp"
#include "fgaps/synthetic.hpp"
#include "fgaps/tensorio.hpp"
#include "support.hpp"

using namespace fgaps;
using fgaps::testing::ScratchDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult cli(const ScratchDir& dir, const std::string& args) {
  const fs::path out = dir / "cli.stdout";
  const fs::path err = dir / "cli.stderr";
  const std::string cmd =
      std::string("\"") + FGAPS_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::map<std::string, std::string> tree_digests(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
  }
  return out;
}

// Small planted dataset on disk; returns the train manifest path.
synthetic::PlantedDataset small_planted(const ScratchDir& dir, int train, int layers, std::uint64_t seed = 3) {
  synthetic::PlantedConfig cfg;
  cfg.train_samples = train;
  cfg.eval_samples = 48;
  cfg.num_layers = layers;
  cfg.hidden_dim = 8;
  cfg.planted_layer = layers - 1;
  cfg.decoy_layer = -1;
  cfg.signal = 1.5;
  cfg.seed = seed;
  return synthetic::generate_planted(cfg, dir / "data");
}

}  // namespace

TEST_CASE("extract directions writes one artifact per feature and layer") {
  ScratchDir dir("pipe_extract");
  const auto ds = small_planted(dir, 8, 4);
  const json s = pipeline::extract_directions({ds.train_manifest, dir / "out"});
  CHECK(s["artifacts"].size() + s["skipped"].size() == 15);
  CHECK(s["artifacts"].size() == 15);
  for (const auto& a : s["artifacts"]) CHECK(fs::exists(dir.path() / "out" / a["path"].get<std::string>()));
  CHECK(s["inputs"][0]["kind"] == "manifest");
  CHECK(s.contains("config_digest"));
}

TEST_CASE("degenerate layers are skipped rather than fatal") {
  ScratchDir dir("pipe_skip");
  DatasetManifest m = testing::random_manifest(8, 2, 3, 4);
  for (auto& s : m.samples) s.bundles[Variant::honesty_neg].hidden_mean.row(1) = s.bundle(Variant::honesty_pos).hidden_mean.row(1);
  synthetic::save_dataset(m, dir / "m.json");
  const json s = pipeline::extract_directions({dir / "m.json", dir / "out"});
  REQUIRE(s["skipped"].size() == 1);
  CHECK(s["skipped"][0]["feature"] == "honesty");
  CHECK(s["skipped"][0]["layer"] == 1);
  CHECK(s["artifacts"].size() == 8);
}

TEST_CASE("cli: missing variants exit nonzero naming MissingVariant") {
  ScratchDir dir("cli_missing");
  DatasetManifest m = testing::random_manifest(4, 1, 3, 5);
  for (auto& s : m.samples) s.bundles.erase(Variant::reliance_neg);
  synthetic::save_dataset(m, dir / "m.json");
  const CliResult r = cli(dir, "extract-directions --manifest " + (dir / "m.json").string() + " --out " +
                                   (dir / "out").string());
  CHECK(r.status == 1);
  CHECK(r.err.find("MissingVariant") != std::string::npos);
}

TEST_CASE("cli: single-class labels make select-layer fail") {
  ScratchDir dir("cli_single");
  DatasetManifest m = testing::random_manifest(6, 1, 3, 6);
  for (auto& s : m.samples) s.correct = 1;
  synthetic::save_dataset(m, dir / "m.json");
  const std::string common = " --manifest " + (dir / "m.json").string() + " --out " + (dir / "out").string();
  REQUIRE(cli(dir, "extract-directions" + common).status == 0);
  const CliResult r = cli(dir, "select-layer" + common);
  CHECK(r.status == 1);
  CHECK(r.err.find("SingleClassLabels") != std::string::npos);
}

TEST_CASE("cli: full pipeline on planted data, provenance and reruns") {
  ScratchDir dir("cli_full");
  const auto ds = small_planted(dir, 96, 4);
  const std::string train = ds.train_manifest.string();
  const std::string eval = ds.eval_manifest.string();
  const std::string fg = (dir / "fg").string();
  const std::string ev = (dir / "ev").string();

  auto run_all = [&] {
    REQUIRE(cli(dir, "extract-directions --manifest " + train + " --out " + fg).status == 0);
    REQUIRE(cli(dir, "select-layer --manifest " + train + " --out " + fg).status == 0);
    REQUIRE(cli(dir, "train-ensemble --manifest " + train + " --out " + fg).status == 0);
    REQUIRE(cli(dir, "score --model " + fg + "/ensemble.json --manifest " + eval + " --out " + ev).status == 0);
    REQUIRE(cli(dir, "evaluate --plot --scores " + ev + "/scores.csv --manifest " + eval + " --out " + ev).status == 0);
  };
  run_all();
  const auto first_fg = tree_digests(fg);
  const auto first_ev = tree_digests(ev);
  run_all();
  CHECK(tree_digests(fg) == first_fg);
  CHECK(tree_digests(ev) == first_ev);

  const json sel = read_json(dir / "fg/layer_selection.json");
  for (const auto& [name, entry] : sel["selected"].items()) CHECK(entry["layer"] == 3);
  const json model = read_json(dir / "fg/ensemble.json");
  CHECK(model["training"]["auroc"].get<double>() >= 0.99);
  CHECK(model["features"].size() == 3);
  const json metrics = read_json(dir / "ev/metrics.json");
  CHECK(metrics["train_manifest_digest"] == load_manifest(ds.train_manifest).digest);
  CHECK(metrics["eval_manifest_digest"] == load_manifest(ds.eval_manifest).digest);
  CHECK(metrics["train_manifest_digest"] != metrics["eval_manifest_digest"]);
  CHECK(metrics["prr"].get<double>() > 0.8);
  CHECK(fs::exists(dir / "ev/rejection_curve.svg"));
  CHECK(metrics["baselines"].contains("perplexity"));
  CHECK(metrics["baselines"].contains("entropy"));

  const CsvTable scores = read_csv(dir / "ev/scores.csv");
  CHECK(scores.header == std::vector<std::string>{"sample_id", "u", "p_correct", "s1", "s2", "s3"});
  CHECK(scores.rows.size() == 48);

  CHECK(cli(dir, "verify-artifacts --out " + fg).status == 0);
  CHECK(cli(dir, "verify-artifacts --out " + ev).status == 0);
  {
    std::ofstream tamper(dir / "ev/scores.csv", std::ios::app);
    tamper << "extra,0,0,0,0,0\n";
  }
  const CliResult bad = cli(dir, "verify-artifacts --out " + ev);
  CHECK(bad.status == 1);
  CHECK(bad.err.find("DigestMismatch") != std::string::npos);
}

TEST_CASE("zero epochs write w = 0 and the oracle column scores prr 1") {
  ScratchDir dir("pipe_zero");
  const auto ds = small_planted(dir, 32, 2);
  pipeline::extract_directions({ds.train_manifest, dir / "fg"});
  pipeline::select_layers({ds.train_manifest, dir / "fg"});
  TrainConfig cfg;
  cfg.epochs = 0;
  pipeline::train({ds.train_manifest, dir / "fg", "", cfg});
  const json model = read_json(dir / "fg/ensemble.json");
  CHECK(model["w"] == json::array({0.0, 0.0, 0.0}));

  const DatasetManifest eval = load_manifest(ds.eval_manifest);
  {
    std::ofstream csv(dir / "oracle.csv");
    csv << "sample_id,oracle\n";
    for (const auto& s : eval.samples) csv << s.id << "," << (1 - s.correct) << "\n";
  }
  pipeline::EvaluateOptions o;
  o.scores = dir / "oracle.csv";
  o.manifest = ds.eval_manifest;
  o.out = dir / "ev";
  o.column = "oracle";
  CHECK(pipeline::evaluate(o)["prr"].get<double>() == 1.0);
  o.negate = true;
  CHECK(pipeline::evaluate(o)["prr"].get<double>() < 0.0);
}

TEST_CASE("cli: config file fills options and flags win") {
  ScratchDir dir("cli_config");
  const auto ds = small_planted(dir, 32, 2);
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << json{{"manifest", ds.train_manifest.string()}, {"out", (dir / "fg").string()}, {"epochs", 0}}.dump();
  }
  const std::string c = " --config " + (dir / "cfg.json").string();
  REQUIRE(cli(dir, "extract-directions" + c).status == 0);
  REQUIRE(cli(dir, "select-layer" + c).status == 0);
  REQUIRE(cli(dir, "train-ensemble" + c).status == 0);
  CHECK(read_json(dir / "fg/ensemble.json")["train_config"]["epochs"] == 0);
  REQUIRE(cli(dir, "train-ensemble --epochs 3" + c).status == 0);
  CHECK(read_json(dir / "fg/ensemble.json")["train_config"]["epochs"] == 3);
  CHECK(cli(dir, "train-ensemble --no-intercept" + c).status == 0);
  CHECK(read_json(dir / "fg/ensemble.json")["b"] == 0.0);
}

TEST_CASE("cli: verify-bound is clean, reproducible and supports the degenerate mode") {
  ScratchDir dir("cli_bound");
  REQUIRE(cli(dir, "verify-bound --trials 1000 --seed 42 --out " + (dir / "a").string()).status == 0);
  REQUIRE(cli(dir, "verify-bound --trials 1000 --seed 42 --out " + (dir / "b").string()).status == 0);
  CHECK(slurp(dir / "a/bound_report.json") == slurp(dir / "b/bound_report.json"));
  const json rep = read_json(dir / "a/bound_report.json");
  CHECK(rep["violation_count"] == 0);
  CHECK(rep["draws"].size() == 1000);

  REQUIRE(cli(dir, "verify-bound --degenerate --trials 50 --out " + (dir / "z").string()).status == 0);
  for (const auto& d : read_json(dir / "z/bound_report.json")["draws"]) {
    CHECK(d["epistemic"] == 0.0);
    CHECK(d["bound"] == 0.0);
  }
}

TEST_CASE("cli: random ablation is reproducible for a seed") {
  ScratchDir dir("cli_ablation");
  const auto ds = small_planted(dir, 64, 3);
  const std::string base = "ablation --strategy random --manifest " + ds.train_manifest.string() +
                           " --eval-manifest " + ds.eval_manifest.string();
  REQUIRE(cli(dir, base + " --seed 5 --out " + (dir / "a").string()).status == 0);
  REQUIRE(cli(dir, base + " --seed 5 --out " + (dir / "b").string()).status == 0);
  REQUIRE(cli(dir, base + " --seed 6 --out " + (dir / "c").string()).status == 0);
  const json a = read_json(dir / "a/ablation_random.json");
  CHECK(slurp(dir / "a/ablation_random.json") == slurp(dir / "b/ablation_random.json"));
  CHECK(a["results"][0]["eval_prr"] != read_json(dir / "c/ablation_random.json")["results"][0]["eval_prr"]);
}

TEST_CASE("cli: usage errors exit nonzero") {
  ScratchDir dir("cli_usage");
  CHECK(cli(dir, "").status != 0);
  CHECK(cli(dir, "train-ensemble --out " + (dir / "x").string()).status == 1);
  CHECK(cli(dir, "evaluate --scores nope.csv --manifest nope.json --out " + (dir / "x").string()).status == 1);
  CHECK(cli(dir, "ablation --strategy sideways --manifest a --eval-manifest b --out c").status == 1);
}
