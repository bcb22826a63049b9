#include "fgaps/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fgaps/digest.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/tensorio.hpp"

namespace fgaps {
namespace {

using json = nlohmann::json;

void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) throw Error(Errc::NonFiniteValue, what + " contains a non-finite value");
}

template <class T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw Error(Errc::SchemaError, where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::SchemaError, where + ": field '" + key + "' has the wrong type");
  }
}

template <class T>
T optional_field(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return field<T>(obj, key, where);
}

}  // namespace

std::string_view variant_name(Variant v) noexcept {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::honesty_pos: return "honesty_pos";
    case Variant::honesty_neg: return "honesty_neg";
    case Variant::reliance_pos: return "reliance_pos";
    case Variant::reliance_neg: return "reliance_neg";
    case Variant::comprehension_pos: return "comprehension_pos";
    case Variant::comprehension_neg: return "comprehension_neg";
  }
  return "standard";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw Error(Errc::SchemaError, "unknown variant '" + std::string(name) + "'");
}

ActivationBundle read_bundle(const std::filesystem::path& path, Variant variant) {
  const TensorFile file = read_tensor_file(path);
  const auto hidden = file.tensors.find("hidden_mean");
  if (hidden == file.tensors.end()) {
    throw Error(Errc::SchemaError, path.filename().string() + ": missing tensor 'hidden_mean'");
  }
  ActivationBundle b;
  b.variant = variant;
  b.hidden_mean = hidden->second.to_matrix();
  if (b.hidden_mean.rows() < 1 || b.hidden_mean.cols() < 1) {
    throw Error(Errc::ShapeMismatch, path.filename().string() + ": empty hidden_mean");
  }
  require_finite(b.hidden_mean, path.filename().string());

  const auto count = file.tensors.find("answer_token_count");
  if (count != file.tensors.end()) {
    if (count->second.data.size() != 1) {
      throw Error(Errc::SchemaError, path.filename().string() + ": answer_token_count must hold one value");
    }
    const float c = count->second.data[0];
    if (!(c >= 1.0f) || c != std::floor(c)) {
      throw Error(Errc::SchemaError, path.filename().string() + ": answer_token_count must be a positive integer");
    }
    b.answer_token_count = static_cast<int>(c);
  }
  const auto lp = file.tensors.find("logprobs");
  if (lp != file.tensors.end()) {
    b.logprobs = lp->second.to_vector();
    require_finite(*b.logprobs, path.filename().string());
  }
  return b;
}

void write_bundle(const ActivationBundle& bundle, const std::filesystem::path& path) {
  TensorMap tensors;
  tensors.emplace("hidden_mean", Tensor::from_matrix(bundle.hidden_mean));
  Tensor count;
  count.shape = {1};
  count.data = {static_cast<float>(bundle.answer_token_count)};
  tensors.emplace("answer_token_count", std::move(count));
  if (bundle.logprobs) tensors.emplace("logprobs", Tensor::from_vector(*bundle.logprobs));
  write_tensor_file(tensors, path);
}

const ActivationBundle& Sample::bundle(Variant v) const {
  const auto it = bundles.find(v);
  if (it == bundles.end()) {
    throw Error(Errc::MissingVariant, id + " has no " + std::string(variant_name(v)) + " bundle");
  }
  return it->second;
}

DatasetManifest DatasetManifest::filter_split(std::string_view split) const {
  DatasetManifest out;
  out.meta = meta;
  out.source = source;
  for (const auto& s : samples)
    if (s.split == split) out.samples.push_back(s);
  out.digest = digest + ":split=" + std::string(split);
  return out;
}

DatasetManifest DatasetManifest::head(std::size_t n) const {
  DatasetManifest out;
  out.meta = meta;
  out.source = source;
  out.samples.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(std::min(n, samples.size())));
  out.digest = digest + ":head=" + std::to_string(n);
  return out;
}

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.correct);
  return y;
}

std::string compute_manifest_digest(const DatasetManifest& manifest,
                                    const std::map<std::string, std::map<Variant, std::string>>& bundle_digests) {
  json canon;
  canon["model_meta"] = {{"num_layers", manifest.meta.num_layers},
                         {"hidden_dim", manifest.meta.hidden_dim},
                         {"hidden_state_site", manifest.meta.hidden_state_site}};
  std::vector<const Sample*> sorted;
  for (const auto& s : manifest.samples) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });
  json arr = json::array();
  for (const Sample* s : sorted) {
    json bundles = json::object();
    const auto it = bundle_digests.find(s->id);
    if (it != bundle_digests.end())
      for (const auto& [v, d] : it->second) bundles[std::string(variant_name(v))] = d;
    json entry = {{"id", s->id},       {"question", s->question}, {"answer", s->answer},
                  {"context", s->context}, {"correct", s->correct}, {"split", s->split},
                  {"bundles", bundles}};
    if (s->sampled_logprob_sums) entry["sampled_logprob_sums"] = *s->sampled_logprob_sums;
    arr.push_back(std::move(entry));
  }
  canon["samples"] = std::move(arr);
  return sha256_hex(canon.dump());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, "manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw Error(Errc::SchemaError, "manifest root must be an object");
  if (!doc.contains("model_meta") || !doc["model_meta"].is_object()) {
    throw Error(Errc::SchemaError, "manifest: missing object 'model_meta'");
  }
  if (!doc.contains("samples") || !doc["samples"].is_array()) {
    throw Error(Errc::SchemaError, "manifest: missing array 'samples'");
  }

  DatasetManifest m;
  m.source = path;
  const json& meta = doc["model_meta"];
  m.meta.num_layers = field<int>(meta, "num_layers", "model_meta");
  m.meta.hidden_dim = field<int>(meta, "hidden_dim", "model_meta");
  m.meta.hidden_state_site = optional_field<std::string>(meta, "hidden_state_site", "", "model_meta");
  if (m.meta.num_layers < 0 || m.meta.hidden_dim < 1) {
    throw Error(Errc::SchemaError, "model_meta: num_layers must be >= 0 and hidden_dim >= 1");
  }

  const std::filesystem::path base = path.parent_path();
  std::set<std::string> ids;
  std::map<std::string, std::map<Variant, std::string>> bundle_digests;

  for (const json& entry : doc["samples"]) {
    if (!entry.is_object()) throw Error(Errc::SchemaError, "samples[] entries must be objects");
    Sample s;
    s.id = field<std::string>(entry, "id", "sample");
    const std::string where = "sample " + s.id;
    if (!ids.insert(s.id).second) throw Error(Errc::SchemaError, "duplicate sample id '" + s.id + "'");
    s.question = optional_field<std::string>(entry, "question", "", where);
    s.answer = optional_field<std::string>(entry, "answer", "", where);
    s.context = optional_field<std::string>(entry, "context", "", where);
    s.split = optional_field<std::string>(entry, "split", "", where);
    s.correct = field<int>(entry, "correct", where);
    if (s.correct != 0 && s.correct != 1) throw Error(Errc::SchemaError, where + ": correct must be 0 or 1");
    if (entry.contains("sampled_logprob_sums") && !entry["sampled_logprob_sums"].is_null()) {
      s.sampled_logprob_sums = field<std::vector<double>>(entry, "sampled_logprob_sums", where);
    }
    if (!entry.contains("bundles") || !entry["bundles"].is_object()) {
      throw Error(Errc::SchemaError, where + ": missing object 'bundles'");
    }
    for (const auto& [vname, vpath] : entry["bundles"].items()) {
      const Variant v = parse_variant(vname);
      if (!vpath.is_string()) throw Error(Errc::SchemaError, where + ": bundle path must be a string");
      const std::filesystem::path rel = vpath.get<std::string>();
      const std::filesystem::path full = rel.is_absolute() ? rel : base / rel;
      if (!std::filesystem::is_regular_file(full)) {
        throw Error(Errc::MissingBundle, s.id + " (" + std::string(vname) + ": " + rel.string() + ")");
      }
      ActivationBundle b;
      try {
        b = read_bundle(full, v);
      } catch (const Error& e) {
        throw Error(e.code(), s.id + ": " + e.detail());
      }
      if (b.num_layers() != m.meta.num_layers || b.hidden_dim() != m.meta.hidden_dim) {
        throw Error(Errc::ShapeMismatch, s.id + " (" + std::string(vname) + ") has shape (" +
                                             std::to_string(b.hidden_mean.rows()) + ", " +
                                             std::to_string(b.hidden_mean.cols()) + "), expected (" +
                                             std::to_string(m.meta.num_layers + 1) + ", " +
                                             std::to_string(m.meta.hidden_dim) + ")");
      }
      bundle_digests[s.id][v] = sha256_file(full);
      s.bundle_paths.emplace(v, rel);
      s.bundles.emplace(v, std::move(b));
    }
    m.samples.push_back(std::move(s));
  }
  m.digest = compute_manifest_digest(m, bundle_digests);
  return m;
}

void write_manifest_json(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json doc;
  doc["model_meta"] = {{"num_layers", manifest.meta.num_layers},
                       {"hidden_dim", manifest.meta.hidden_dim},
                       {"hidden_state_site", manifest.meta.hidden_state_site}};
  json arr = json::array();
  for (const auto& s : manifest.samples) {
    json bundles = json::object();
    for (const auto& [v, p] : s.bundle_paths) bundles[std::string(variant_name(v))] = p.generic_string();
    json entry = {{"id", s.id},         {"question", s.question}, {"answer", s.answer},
                  {"context", s.context}, {"correct", s.correct},   {"split", s.split},
                  {"bundles", bundles}};
    if (s.sampled_logprob_sums) entry["sampled_logprob_sums"] = *s.sampled_logprob_sums;
    arr.push_back(std::move(entry));
  }
  doc["samples"] = std::move(arr);
  write_text_file(path, doc.dump(1) + "\n");
}

}  // namespace fgaps
