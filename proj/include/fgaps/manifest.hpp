#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace fgaps {

// One forward pass per variant: the standard prompt plus a pos/neg pair per feature.
enum class Variant {
  standard,
  honesty_pos,
  honesty_neg,
  reliance_pos,
  reliance_neg,
  comprehension_pos,
  comprehension_neg,
};

inline constexpr std::array<Variant, 7> kAllVariants = {
    Variant::standard,     Variant::honesty_pos,       Variant::honesty_neg,      Variant::reliance_pos,
    Variant::reliance_neg, Variant::comprehension_pos, Variant::comprehension_neg,
};

std::string_view variant_name(Variant v) noexcept;
Variant parse_variant(std::string_view name);

struct ActivationBundle {
  // Row l is the layer-l hidden state averaged over the answer tokens; row 0 is the embedding output.
  Eigen::MatrixXd hidden_mean;
  int answer_token_count = 1;
  std::optional<Eigen::VectorXd> logprobs;
  Variant variant = Variant::standard;

  int num_layers() const { return static_cast<int>(hidden_mean.rows()) - 1; }
  int hidden_dim() const { return static_cast<int>(hidden_mean.cols()); }
};

ActivationBundle read_bundle(const std::filesystem::path& path, Variant variant);
void write_bundle(const ActivationBundle& bundle, const std::filesystem::path& path);

struct ModelMeta {
  int num_layers = 0;  // L; bundles carry L + 1 rows
  int hidden_dim = 0;
  // Where the producer tapped the hidden states, e.g. "pre_final_norm". Free-form.
  std::string hidden_state_site;
};

struct Sample {
  std::string id;
  std::string question;
  std::string answer;
  std::string context;
  int correct = 0;
  std::string split;
  std::map<Variant, std::filesystem::path> bundle_paths;  // as written in the manifest
  std::map<Variant, ActivationBundle> bundles;
  std::optional<std::vector<double>> sampled_logprob_sums;

  bool has(Variant v) const { return bundles.contains(v); }
  // Throws MissingVariant naming the sample.
  const ActivationBundle& bundle(Variant v) const;
};

struct DatasetManifest {
  ModelMeta meta;
  std::vector<Sample> samples;  // manifest order
  // Order-independent content digest over metadata, labels and bundle bytes.
  std::string digest;
  std::filesystem::path source;

  DatasetManifest filter_split(std::string_view split) const;
  DatasetManifest head(std::size_t n) const;
  std::vector<int> labels() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes the manifest JSON; bundle paths are emitted as stored in each Sample.
void write_manifest_json(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string compute_manifest_digest(const DatasetManifest& manifest,
                                    const std::map<std::string, std::map<Variant, std::string>>& bundle_digests);

}  // namespace fgaps
