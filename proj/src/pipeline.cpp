#include "fgaps/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "fgaps/digest.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/metrics.hpp"
#include "fgaps/report.hpp"
#include "fgaps/tensorio.hpp"

namespace fgaps::pipeline {
namespace {

constexpr const char* kExtractSummary = "extract_summary.json";
constexpr const char* kLayerSelection = "layer_selection.json";
constexpr const char* kModelFile = "ensemble.json";

std::string rel(const fs::path& target, const fs::path& base_dir) {
  return fs::proximate(fs::absolute(target), fs::absolute(base_dir)).generic_string();
}

json manifest_input(const fs::path& path, const std::string& digest, const fs::path& artifact_dir) {
  return {{"kind", "manifest"}, {"path", rel(path, artifact_dir)}, {"digest", digest}};
}

json file_input(const fs::path& path, const fs::path& artifact_dir) {
  return {{"kind", "file"}, {"path", rel(path, artifact_dir)}, {"digest", sha256_file(path)}};
}

json features_json(const std::vector<Feature>& features) {
  json arr = json::array();
  for (Feature f : features) arr.push_back(feature_name(f));
  return arr;
}

void stamp(json& artifact, const json& config) {
  artifact["config"] = config;
  artifact["config_digest"] = sha256_hex(config.dump());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

struct LoadedManifest {
  DatasetManifest data;
  std::string file_digest;  // digest of the full manifest, before any split filter
};

LoadedManifest load(const fs::path& path, const std::string& split) {
  LoadedManifest m;
  m.data = load_manifest(path);
  m.file_digest = m.data.digest;
  if (!split.empty()) m.data = m.data.filter_split(split);
  if (m.data.samples.empty()) throw Error(Errc::SchemaError, path.string() + " has no samples in the requested split");
  return m;
}

fs::path direction_path(const fs::path& out, Feature f, int layer) {
  char name[32];
  std::snprintf(name, sizeof name, "layer_%02d.tensors", layer);
  return out / "directions" / std::string(feature_name(f)) / name;
}

std::vector<double> negated(const Eigen::VectorXd& s) {
  std::vector<double> u(static_cast<std::size_t>(s.size()));
  for (Eigen::Index i = 0; i < s.size(); ++i) u[static_cast<std::size_t>(i)] = -s(i);
  return u;
}

std::vector<double> ensemble_uncertainty(const DatasetManifest& m, const EnsembleModel& model) {
  std::vector<double> u;
  u.reserve(m.samples.size());
  for (const Sample& s : m.samples) u.push_back(fgaps::score(s.bundle(Variant::standard), model).u);
  return u;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t direction_seed(std::uint64_t seed, Feature feature, int layer) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(feature) << 32) ^ static_cast<std::uint64_t>(layer));
}

json extract_directions(const ExtractOptions& opts) {
  const LoadedManifest m = load(opts.manifest, opts.split);
  const json config = {{"command", "extract-directions"},
                       {"manifest", opts.manifest.generic_string()},
                       {"features", features_json(opts.features)},
                       {"split", opts.split},
                       {"center", opts.center}};
  PcaOptions pca;
  pca.center = opts.center;

  json artifacts = json::array();
  json skipped = json::array();
  for (Feature f : opts.features) {
    for (int layer = 0; layer <= m.data.meta.num_layers; ++layer) {
      FeatureDirection dir;
      try {
        dir = extract_direction_pca(build_difference_matrix(m.data, f, layer), pca);
      } catch (const Error& e) {
        if (e.code() == Errc::DegenerateMatrix || e.code() == Errc::NoConvergence) {
          skipped.push_back({{"feature", feature_name(f)}, {"layer", layer}, {"reason", e.what()}});
          continue;
        }
        throw Error(e.code(), std::string(feature_name(f)) + " layer " + std::to_string(layer) + ": " + e.detail());
      }
      dir.manifest_digest = m.data.digest;
      const fs::path path = direction_path(opts.out, f, layer);
      write_direction(dir, path);
      artifacts.push_back({{"feature", feature_name(f)},
                           {"layer", layer},
                           {"path", rel(path, opts.out)},
                           {"digest", sha256_file(path)}});
    }
  }

  json summary = {{"manifest_digest", m.data.digest},
                  {"inputs", json::array({manifest_input(opts.manifest, m.file_digest, opts.out)})},
                  {"artifacts", artifacts},
                  {"skipped", skipped}};
  for (const auto& a : artifacts) summary["outputs"].push_back({{"kind", "file"}, {"path", a["path"]}, {"digest", a["digest"]}});
  stamp(summary, config);
  write_json(opts.out / kExtractSummary, summary);
  return summary;
}

json select_layers(const SelectOptions& opts) {
  const LoadedManifest m = load(opts.manifest, opts.split);
  const json extract = read_json(opts.out / kExtractSummary);
  const json config = {{"command", "select-layer"},
                       {"manifest", opts.manifest.generic_string()},
                       {"features", features_json(opts.features)},
                       {"split", opts.split}};

  json inputs = json::array({manifest_input(opts.manifest, m.file_digest, opts.out)});
  json tables = json::array();
  json selected = json::object();
  for (Feature f : opts.features) {
    std::vector<FeatureDirection> dirs;
    std::map<int, fs::path> paths;
    for (const auto& a : extract.at("artifacts")) {
      if (a.at("feature").get<std::string>() != feature_name(f)) continue;
      const fs::path p = opts.out / a.at("path").get<std::string>();
      dirs.push_back(read_direction(p));
      paths[dirs.back().layer] = p;
      inputs.push_back(file_input(p, opts.out));
    }
    const LayerScoreTable table = select_layer(m.data, f, dirs);
    tables.push_back(to_json(table));
    const fs::path chosen = paths.at(table.selected_layer);
    selected[std::string(feature_name(f))] = {{"layer", table.selected_layer},
                                              {"direction_path", rel(chosen, opts.out)},
                                              {"direction_digest", sha256_file(chosen)}};
  }
  json out = {{"manifest_digest", m.data.digest}, {"inputs", inputs}, {"tables", tables}, {"selected", selected}};
  stamp(out, config);
  write_json(opts.out / kLayerSelection, out);
  return out;
}

json train(const TrainOptions& opts) {
  const LoadedManifest m = load(opts.manifest, opts.split);
  const json selection = read_json(opts.out / kLayerSelection);
  const json config = {{"command", "train-ensemble"},
                       {"manifest", opts.manifest.generic_string()},
                       {"split", opts.split},
                       {"train_config", to_json(opts.train)}};

  std::array<EnsembleFeature, 3> features;
  json inputs = json::array({manifest_input(opts.manifest, m.file_digest, opts.out)});
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string name(feature_name(kAllFeatures[k]));
    if (!selection.at("selected").contains(name)) {
      throw Error(Errc::SchemaError, "layer selection lacks feature '" + name + "'; the ensemble needs all three");
    }
    const json& sel = selection["selected"][name];
    const fs::path p = opts.out / sel.at("direction_path").get<std::string>();
    features[k].direction = read_direction(p);
    features[k].direction_path = rel(p, opts.out);
    features[k].direction_digest = sha256_file(p);
    inputs.push_back(file_input(p, opts.out));
  }
  const EnsembleModel model = train_ensemble(m.data, features, opts.train);

  const auto pairs = make_pairs(ensemble_uncertainty(m.data, model), m.data.labels());
  json extra = {{"inputs", inputs},
                {"training", {{"n", pairs.size()}, {"auroc", auroc(pairs)}, {"prr", prr(pairs)}, {"loss", model.final_loss}}}};
  stamp(extra, config);
  save_model(model, opts.out / kModelFile, extra);
  json summary = to_json(model);
  for (const auto& [k, v] : extra.items()) summary[k] = v;
  return summary;
}

json score(const ScoreOptions& opts) {
  const EnsembleModel model = load_model(opts.model);
  const LoadedManifest m = load(opts.manifest, opts.split);
  const json config = {{"command", "score"},
                       {"model", opts.model.generic_string()},
                       {"manifest", opts.manifest.generic_string()},
                       {"split", opts.split}};
  std::vector<ScoreRow> rows;
  rows.reserve(m.data.samples.size());
  for (const Sample& s : m.data.samples) {
    const UncertaintyScore us = fgaps::score(s.bundle(Variant::standard), model);
    rows.push_back({s.id, us.u, us.p_correct, us.per_feature});
  }
  const fs::path csv = opts.out / "scores.csv";
  write_scores_csv(rows, csv);
  json summary = {{"n", rows.size()},
                  {"train_manifest_digest", model.manifest_digest},
                  {"eval_manifest_digest", m.data.digest},
                  {"inputs", json::array({file_input(opts.model, opts.out),
                                          manifest_input(opts.manifest, m.file_digest, opts.out)})},
                  {"outputs", json::array({file_input(csv, opts.out)})}};
  stamp(summary, config);
  write_json(opts.out / "score_summary.json", summary);
  return summary;
}

json evaluate(const EvaluateOptions& opts) {
  const LoadedManifest m = load(opts.manifest, opts.split);
  const CsvTable table = read_csv(opts.scores);
  const std::size_t id_col = table.column("sample_id");
  const std::size_t val_col = table.column(opts.column);
  const json config = {{"command", "evaluate"},
                       {"scores", opts.scores.generic_string()},
                       {"manifest", opts.manifest.generic_string()},
                       {"column", opts.column},
                       {"negate", opts.negate},
                       {"plot", opts.plot},
                       {"split", opts.split}};

  std::map<std::string, double> by_id;
  for (const auto& row : table.rows) {
    double v = 0.0;
    try {
      v = std::stod(row[val_col]);
    } catch (const std::exception&) {
      throw Error(Errc::SchemaError, "non-numeric value '" + row[val_col] + "' in column " + opts.column);
    }
    by_id[row[id_col]] = opts.negate ? -v : v;
  }
  std::vector<double> u;
  for (const Sample& s : m.data.samples) {
    const auto it = by_id.find(s.id);
    if (it == by_id.end()) throw Error(Errc::SchemaError, "scores lack sample " + s.id);
    u.push_back(it->second);
  }
  const std::vector<int> labels = m.data.labels();
  const auto pairs = make_pairs(u, labels);
  json report = metrics_report(pairs);

  json baselines = json::object();
  const bool have_logprobs = std::all_of(m.data.samples.begin(), m.data.samples.end(), [](const Sample& s) {
    return s.has(Variant::standard) && s.bundle(Variant::standard).logprobs.has_value();
  });
  if (have_logprobs) {
    std::vector<double> ppl;
    for (const Sample& s : m.data.samples) ppl.push_back(baseline_perplexity(s.bundle(Variant::standard)));
    const auto bp = make_pairs(ppl, labels);
    baselines["perplexity"] = {{"auroc", auroc(bp)}, {"prr", prr(bp)}};
  }
  const bool have_samples = std::all_of(m.data.samples.begin(), m.data.samples.end(), [](const Sample& s) {
    return s.sampled_logprob_sums && s.sampled_logprob_sums->size() >= 2;
  });
  if (have_samples) {
    std::vector<double> ent;
    for (const Sample& s : m.data.samples) ent.push_back(baseline_entropy(*s.sampled_logprob_sums));
    const auto bp = make_pairs(ent, labels);
    baselines["entropy"] = {{"auroc", auroc(bp)}, {"prr", prr(bp)}};
  }
  report["baselines"] = baselines;
  report["eval_manifest_digest"] = m.data.digest;
  const fs::path score_summary = opts.scores.parent_path() / "score_summary.json";
  if (fs::exists(score_summary)) {
    report["train_manifest_digest"] = read_json(score_summary).value("train_manifest_digest", "");
  }
  report["inputs"] = json::array({file_input(opts.scores, opts.out), manifest_input(opts.manifest, m.file_digest, opts.out)});
  if (opts.plot) {
    const fs::path svg = opts.out / "rejection_curve.svg";
    write_text_file(svg, rejection_curve_svg(rejection_curve(pairs), "Rejection curve (" + opts.column + ")"));
    report["outputs"] = json::array({file_input(svg, opts.out)});
  }
  stamp(report, config);
  write_json(opts.out / "metrics.json", report);
  return report;
}

json verify_bound(const BoundOptions& opts) {
  const boundlab::BoundSuiteReport rep = boundlab::run_bound_suite(opts.suite);
  json out = boundlab::to_json(rep);
  const json config = {{"command", "verify-bound"}, {"suite", out["config"]}};
  stamp(out, config);
  write_json(opts.out / "bound_report.json", out);
  if (rep.violation_count > 0) {
    for (const auto& d : rep.draws) {
      if (!d.violations.empty()) {
        throw Error(Errc::ViolationFound, d.violations.front() + " in draw seed " + std::to_string(d.seed));
      }
    }
    throw Error(Errc::ViolationFound, "toy prompt search did not recover the golden prefix");
  }
  return out;
}

StrategyResult run_strategy(const DatasetManifest& train_set, const DatasetManifest& eval_set, Strategy strategy,
                            std::uint64_t seed, const TrainConfig& cfg, const PcaOptions& pca) {
  StrategyResult result;
  result.strategy = strategy;
  std::array<EnsembleFeature, 3> features;
  for (std::size_t k = 0; k < 3; ++k) {
    const Feature f = kAllFeatures[k];
    std::vector<FeatureDirection> dirs;
    for (int layer = 0; layer <= train_set.meta.num_layers; ++layer) {
      try {
        dirs.push_back(
            extract_direction_ablation(train_set, f, layer, strategy, direction_seed(seed, f, layer), pca));
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateMatrix && e.code() != Errc::NoConvergence) throw;
      }
    }
    result.tables[k] = select_layer(train_set, f, dirs);
    const auto it = std::find_if(dirs.begin(), dirs.end(),
                                 [&](const FeatureDirection& d) { return d.layer == result.tables[k].selected_layer; });
    features[k].direction = *it;
  }
  result.model = train_ensemble(train_set, features, cfg);
  const auto train_pairs = make_pairs(ensemble_uncertainty(train_set, result.model), train_set.labels());
  result.train_prr = prr(train_pairs);
  const auto eval_pairs = make_pairs(ensemble_uncertainty(eval_set, result.model), eval_set.labels());
  result.eval_prr = prr(eval_pairs);
  result.eval_auroc = auroc(eval_pairs);
  return result;
}

json ablation(const AblationOptions& opts) {
  LoadedManifest train_m = load(opts.manifest, opts.split);
  if (opts.train_limit > 0) train_m.data = train_m.data.head(opts.train_limit);
  const LoadedManifest eval_m = load(opts.eval_manifest, opts.eval_split);
  const json config = {{"command", "ablation"},
                       {"manifest", opts.manifest.generic_string()},
                       {"eval_manifest", opts.eval_manifest.generic_string()},
                       {"strategy", opts.strategy},
                       {"seed", opts.seed},
                       {"train_config", to_json(opts.train)},
                       {"split", opts.split},
                       {"eval_split", opts.eval_split},
                       {"train_limit", opts.train_limit},
                       {"center", opts.center}};

  std::vector<Strategy> strategies;
  if (opts.strategy == "all") {
    strategies.assign(kAllStrategies.begin(), kAllStrategies.end());
  } else {
    strategies.push_back(parse_strategy(opts.strategy));
  }
  PcaOptions pca;
  pca.center = opts.center;

  json results = json::array();
  for (Strategy s : strategies) {
    const StrategyResult r = run_strategy(train_m.data, eval_m.data, s, opts.seed, opts.train, pca);
    json layers = json::object();
    for (const auto& t : r.tables) layers[std::string(feature_name(t.feature))] = t.selected_layer;
    results.push_back({{"strategy", strategy_name(s)},
                       {"selected_layers", layers},
                       {"train_prr", r.train_prr},
                       {"eval_prr", r.eval_prr},
                       {"eval_auroc", r.eval_auroc},
                       {"weights", {r.model.w(0), r.model.w(1), r.model.w(2)}}});
  }
  json out = {{"train_manifest_digest", train_m.data.digest},
              {"eval_manifest_digest", eval_m.data.digest},
              {"inputs", json::array({manifest_input(opts.manifest, train_m.file_digest, opts.out),
                                      manifest_input(opts.eval_manifest, eval_m.file_digest, opts.out)})},
              {"results", results}};
  stamp(out, config);
  write_json(opts.out / ("ablation_" + opts.strategy + ".json"), out);
  return out;
}

json verify_artifacts(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::IoFailure, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  json checked = json::array();
  std::size_t failures = 0;
  std::map<std::string, std::string> manifest_cache;
  for (const fs::path& file : files) {
    json doc;
    try {
      doc = read_json(file);
    } catch (const Error&) {
      continue;
    }
    if (!doc.is_object() || (!doc.contains("inputs") && !doc.contains("outputs"))) continue;
    json problems = json::array();
    std::size_t count = 0;
    for (const char* key : {"inputs", "outputs"}) {
      if (!doc.contains(key)) continue;
      for (const auto& in : doc[key]) {
        ++count;
        const fs::path target = file.parent_path() / in.at("path").get<std::string>();
        const std::string want = in.at("digest").get<std::string>();
        std::string have;
        try {
          if (in.value("kind", "file") == "manifest") {
            const std::string keystr = fs::absolute(target).lexically_normal().string();
            auto it = manifest_cache.find(keystr);
            if (it == manifest_cache.end()) it = manifest_cache.emplace(keystr, load_manifest(target).digest).first;
            have = it->second;
          } else {
            have = sha256_file(target);
          }
        } catch (const Error& e) {
          have = std::string("unreadable: ") + e.what();
        }
        if (have != want) problems.push_back({{"path", in["path"]}, {"expected", want}, {"found", have}});
      }
    }
    failures += problems.size();
    checked.push_back({{"artifact", rel(file, dir)}, {"checked", count}, {"problems", problems}});
  }
  json report = {{"artifacts", checked}, {"failures", failures}};
  if (failures > 0) {
    throw Error(Errc::DigestMismatch, std::to_string(failures) + " digest check(s) failed:\n" + report.dump(1));
  }
  return report;
}

}  // namespace fgaps::pipeline
