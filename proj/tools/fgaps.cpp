// fgaps: command-line driver for direction extraction, layer selection,
// ensemble training, scoring/evaluation, ablations and the bound lab.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgaps/errors.hpp"
#include "fgaps/pipeline.hpp"
#include "fgaps/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fgaps;

namespace {

// Flags given on the command line win over the JSON config file.
class ConfigFile {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoFailure, "cannot open config " + path);
    try {
      doc_ = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaError, "config " + path + ": " + e.what());
    }
    if (!doc_.is_object()) throw Error(Errc::SchemaError, "config root must be an object");
  }

  template <class T>
  void fill(const CLI::App* sub, const std::string& flag, T& target) const {
    std::string key = flag;
    for (char& c : key)
      if (c == '-') c = '_';
    const CLI::Option* opt = sub->get_option_no_throw("--" + flag);
    if ((opt != nullptr && opt->count() > 0) || !doc_.contains(key)) return;
    try {
      target = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(Errc::SchemaError, "config key '" + key + "' has the wrong type");
    }
  }

 private:
  json doc_ = json::object();
};

std::vector<Feature> parse_features(const std::vector<std::string>& names) {
  if (names.empty()) return {kAllFeatures.begin(), kAllFeatures.end()};
  std::vector<Feature> out;
  for (const auto& n : names) out.push_back(parse_feature(n));
  return out;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(Errc::InvalidArgument, std::string(flag) + " is required");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-gap epistemic uncertainty engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string manifest, eval_manifest, out, model, scores, column = "u", split, eval_split, strategy = "all";
  std::vector<std::string> features;
  std::uint64_t seed = 0;
  bool plot = false, no_intercept = false, uncentered = false, negate = false, degenerate = false;
  TrainConfig train_cfg;
  std::size_t train_limit = 0;
  boundlab::BoundSuiteConfig suite;
  synthetic::PlantedConfig synth;

  auto common = [&](CLI::App* sub) { sub->add_option("--config", config_path, "JSON config; flags win"); };
  auto train_flags = [&](CLI::App* sub) {
    sub->add_option("--lr", train_cfg.learning_rate, "gradient-descent learning rate");
    sub->add_option("--epochs", train_cfg.epochs, "full-batch epochs");
    sub->add_option("--l2", train_cfg.l2_lambda, "L2 penalty on the weights");
    sub->add_flag("--no-intercept", no_intercept, "train the three weights only");
  };

  auto* cmd_synth = app.add_subcommand("synth", "write a planted-signal synthetic dataset");
  common(cmd_synth);
  cmd_synth->add_option("--out", out, "output directory");
  cmd_synth->add_option("--seed", synth.seed, "generator seed");
  cmd_synth->add_option("--train-samples", synth.train_samples);
  cmd_synth->add_option("--eval-samples", synth.eval_samples);
  cmd_synth->add_option("--layers", synth.num_layers, "L (bundles hold L+1 rows)");
  cmd_synth->add_option("--dim", synth.hidden_dim);
  cmd_synth->add_option("--planted-layer", synth.planted_layer);
  cmd_synth->add_option("--decoy-layer", synth.decoy_layer, "-1 disables the decoy");
  cmd_synth->add_option("--noise", synth.noise);
  cmd_synth->add_option("--signal", synth.signal);

  auto* cmd_extract = app.add_subcommand("extract-directions", "contrastive PCA directions per feature and layer");
  common(cmd_extract);
  cmd_extract->add_option("--manifest", manifest);
  cmd_extract->add_option("--out", out);
  cmd_extract->add_option("--feature", features, "restrict to these features");
  cmd_extract->add_option("--split", split);
  cmd_extract->add_flag("--uncentered", uncentered, "skip column centering before PCA");

  auto* cmd_select = app.add_subcommand("select-layer", "pick each feature's layer by PRR");
  common(cmd_select);
  cmd_select->add_option("--manifest", manifest);
  cmd_select->add_option("--out", out, "directory holding extract-directions output");
  cmd_select->add_option("--feature", features);
  cmd_select->add_option("--split", split);

  auto* cmd_train = app.add_subcommand("train-ensemble", "fit the three-feature logistic ensemble");
  common(cmd_train);
  cmd_train->add_option("--manifest", manifest);
  cmd_train->add_option("--out", out, "directory holding select-layer output");
  cmd_train->add_option("--split", split);
  train_flags(cmd_train);

  auto* cmd_score = app.add_subcommand("score", "per-sample uncertainty CSV");
  common(cmd_score);
  cmd_score->add_option("--model", model, "ensemble.json");
  cmd_score->add_option("--manifest", manifest);
  cmd_score->add_option("--out", out);
  cmd_score->add_option("--split", split);

  auto* cmd_eval = app.add_subcommand("evaluate", "AUROC/PRR of a score column plus baselines");
  common(cmd_eval);
  cmd_eval->add_option("--scores", scores, "CSV with a sample_id column");
  cmd_eval->add_option("--manifest", manifest);
  cmd_eval->add_option("--out", out);
  cmd_eval->add_option("--column", column, "uncertainty column (default u)");
  cmd_eval->add_flag("--negate", negate, "column is a confidence; negate it");
  cmd_eval->add_flag("--plot", plot, "write rejection_curve.svg");
  cmd_eval->add_option("--split", split);

  auto* cmd_bound = app.add_subcommand("verify-bound", "check the decomposition and KL bound on random draws");
  common(cmd_bound);
  cmd_bound->add_option("--out", out);
  cmd_bound->add_option("--trials", suite.trials);
  cmd_bound->add_option("--seed", suite.seed);
  cmd_bound->add_option("--v-min", suite.v_min);
  cmd_bound->add_option("--v-max", suite.v_max);
  cmd_bound->add_option("--d-min", suite.d_min);
  cmd_bound->add_option("--d-max", suite.d_max);
  cmd_bound->add_flag("--degenerate", degenerate, "use h* = h in every draw");

  auto* cmd_ablation = app.add_subcommand("ablation", "compare direction strategies end to end");
  common(cmd_ablation);
  cmd_ablation->add_option("--manifest", manifest, "training manifest");
  cmd_ablation->add_option("--eval-manifest", eval_manifest);
  cmd_ablation->add_option("--out", out);
  cmd_ablation->add_option("--strategy", strategy, "strategy name or 'all'");
  cmd_ablation->add_option("--seed", seed);
  cmd_ablation->add_option("--train-limit", train_limit, "use only the first N training samples");
  cmd_ablation->add_option("--split", split);
  cmd_ablation->add_option("--eval-split", eval_split);
  cmd_ablation->add_flag("--uncentered", uncentered);
  train_flags(cmd_ablation);

  auto* cmd_verify = app.add_subcommand("verify-artifacts", "re-check artifact -> input digest chains");
  common(cmd_verify);
  cmd_verify->add_option("--out", out, "artifact directory");

  CLI11_PARSE(app, argc, argv);

  try {
    ConfigFile cfg;
    cfg.load(config_path);
    CLI::App* sub = app.get_subcommands().front();
    cfg.fill(sub, "out", out);
    cfg.fill(sub, "manifest", manifest);
    cfg.fill(sub, "split", split);
    json result;

    if (sub == cmd_synth) {
      cfg.fill(sub, "seed", synth.seed);
      cfg.fill(sub, "train-samples", synth.train_samples);
      cfg.fill(sub, "eval-samples", synth.eval_samples);
      cfg.fill(sub, "layers", synth.num_layers);
      cfg.fill(sub, "dim", synth.hidden_dim);
      cfg.fill(sub, "planted-layer", synth.planted_layer);
      cfg.fill(sub, "decoy-layer", synth.decoy_layer);
      cfg.fill(sub, "noise", synth.noise);
      cfg.fill(sub, "signal", synth.signal);
      require(out, "--out");
      const auto ds = synthetic::generate_planted(synth, out);
      result = {{"train_manifest", ds.train_manifest.generic_string()},
                {"eval_manifest", ds.eval_manifest.generic_string()}};
    } else if (sub == cmd_extract) {
      cfg.fill(sub, "feature", features);
      cfg.fill(sub, "uncentered", uncentered);
      require(manifest, "--manifest");
      require(out, "--out");
      pipeline::ExtractOptions o{manifest, out, parse_features(features), split, !uncentered};
      const json s = pipeline::extract_directions(o);
      result = {{"directions", s["artifacts"].size()}, {"skipped", s["skipped"]}};
    } else if (sub == cmd_select) {
      cfg.fill(sub, "feature", features);
      require(manifest, "--manifest");
      require(out, "--out");
      const json s = pipeline::select_layers({manifest, out, parse_features(features), split});
      result = {{"selected", s["selected"]}};
    } else if (sub == cmd_train) {
      cfg.fill(sub, "lr", train_cfg.learning_rate);
      cfg.fill(sub, "epochs", train_cfg.epochs);
      cfg.fill(sub, "l2", train_cfg.l2_lambda);
      cfg.fill(sub, "no-intercept", no_intercept);
      train_cfg.intercept = !no_intercept;
      require(manifest, "--manifest");
      require(out, "--out");
      const json s = pipeline::train({manifest, out, split, train_cfg});
      result = {{"w", s["w"]}, {"b", s["b"]}, {"training", s["training"]}};
    } else if (sub == cmd_score) {
      cfg.fill(sub, "model", model);
      require(model, "--model");
      require(manifest, "--manifest");
      require(out, "--out");
      const json s = pipeline::score({model, manifest, out, split});
      result = {{"n", s["n"]}, {"scores", (fs::path(out) / "scores.csv").generic_string()}};
    } else if (sub == cmd_eval) {
      cfg.fill(sub, "scores", scores);
      cfg.fill(sub, "column", column);
      cfg.fill(sub, "negate", negate);
      cfg.fill(sub, "plot", plot);
      require(scores, "--scores");
      require(manifest, "--manifest");
      require(out, "--out");
      const json s = pipeline::evaluate({scores, manifest, out, column, negate, plot, split});
      result = {{"n", s["n"]}, {"auroc", s["auroc"]}, {"prr", s["prr"]}, {"baselines", s["baselines"]}};
    } else if (sub == cmd_bound) {
      cfg.fill(sub, "trials", suite.trials);
      cfg.fill(sub, "seed", suite.seed);
      cfg.fill(sub, "v-min", suite.v_min);
      cfg.fill(sub, "v-max", suite.v_max);
      cfg.fill(sub, "d-min", suite.d_min);
      cfg.fill(sub, "d-max", suite.d_max);
      cfg.fill(sub, "degenerate", degenerate);
      suite.degenerate = degenerate;
      require(out, "--out");
      const json s = pipeline::verify_bound({suite, out});
      result = {{"violation_count", s["violation_count"]},
                {"max_kl_over_bound", s["max_kl_over_bound"]},
                {"toy_kl_curve", s["toy_prompt_search"]["kl_curve"]}};
    } else if (sub == cmd_ablation) {
      cfg.fill(sub, "eval-manifest", eval_manifest);
      cfg.fill(sub, "strategy", strategy);
      cfg.fill(sub, "seed", seed);
      cfg.fill(sub, "train-limit", train_limit);
      cfg.fill(sub, "eval-split", eval_split);
      cfg.fill(sub, "uncentered", uncentered);
      cfg.fill(sub, "lr", train_cfg.learning_rate);
      cfg.fill(sub, "epochs", train_cfg.epochs);
      cfg.fill(sub, "l2", train_cfg.l2_lambda);
      cfg.fill(sub, "no-intercept", no_intercept);
      train_cfg.intercept = !no_intercept;
      require(manifest, "--manifest");
      require(eval_manifest, "--eval-manifest");
      require(out, "--out");
      pipeline::AblationOptions o;
      o.manifest = manifest;
      o.eval_manifest = eval_manifest;
      o.out = out;
      o.strategy = strategy;
      o.seed = seed;
      o.train = train_cfg;
      o.split = split;
      o.eval_split = eval_split;
      o.train_limit = train_limit;
      o.center = !uncentered;
      const json s = pipeline::ablation(o);
      result = s["results"];
    } else if (sub == cmd_verify) {
      require(out, "--out");
      const json s = pipeline::verify_artifacts(out);
      result = {{"artifacts", s["artifacts"].size()}, {"failures", s["failures"]}};
    }
    std::cout << result.dump(1) << "\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
