#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fgaps::boundlab {

// Vocabulary projection W (V x d) with cached norms.
struct ProjectionHead {
  Eigen::MatrixXd w;
  double spectral_norm = 0.0;
  double frobenius_norm = 0.0;

  explicit ProjectionHead(Eigen::MatrixXd weights);
  ProjectionHead() = default;

  Eigen::Index vocab() const { return w.rows(); }
  Eigen::Index dim() const { return w.cols(); }
};

double log_sum_exp(const Eigen::VectorXd& x);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

/// softmax(W h) with max subtraction.
Eigen::VectorXd softmax_distribution(const ProjectionHead& head, const Eigen::VectorXd& h);

/// KL(p || q) from log-probabilities, summed so every term is non-negative.
double kl_from_logs(const Eigen::VectorXd& log_p, const Eigen::VectorXd& log_q);

struct UncertaintyBreakdown {
  double total = 0.0;      // cross-entropy -sum P* log P
  double aleatoric = 0.0;  // H(P*)
  double epistemic = 0.0;  // KL(P* || P)
  double bound = 0.0;      // 2 |W|_2 |h* - h|
  double frobenius_bound = 0.0;
};

UncertaintyBreakdown uncertainty_breakdown(const ProjectionHead& head, const Eigen::VectorXd& h_star,
                                           const Eigen::VectorXd& h);

// The two terms the KL splits into, and the quantities bounding each.
struct ProofIntermediates {
  double term1 = 0.0;        // sum_i P*_i (W (h* - h))_i
  double term1_bound = 0.0;  // |W (h* - h)|_2
  double term2 = 0.0;        // f(W h) - f(W h*), f = log-sum-exp
  double lse_gap = 0.0;      // |term2|
  double norm_bound = 0.0;   // |W|_2 |h* - h|
};

ProofIntermediates proof_intermediates(const ProjectionHead& head, const Eigen::VectorXd& h_star,
                                       const Eigen::VectorXd& h);

/// Tiny autoregressive model: s_t = tanh(R s_{t-1} + E[x_t] + c), logits = W s_T.
/// Prompting changes the state, never the weights.
struct ToyLM {
  Eigen::MatrixXd embedding;  // V x d
  Eigen::MatrixXd recurrent;  // d x d
  Eigen::VectorXd bias;       // d
  ProjectionHead head;

  static ToyLM random(int vocab, int dim, std::uint64_t seed);

  int vocab() const { return static_cast<int>(embedding.rows()); }
  Eigen::VectorXd final_state(std::span<const int> tokens) const;
  Eigen::VectorXd log_distribution(std::span<const int> tokens) const;
  Eigen::VectorXd distribution(std::span<const int> tokens) const;
};

enum class EnumerationOrder { forward, reverse };

struct PromptSearchResult {
  std::vector<int> s_star;
  double objective = 0.0;
  std::vector<double> kl_curve;  // best objective with prompts of length <= k, k = 0..max_len
  std::size_t evaluated = 0;
};

/// Exhaustive search for the prefix minimizing mean KL(P*(.|x) || P(.|s, x)) where
/// P* is the same model run behind a hidden golden prefix. Ties resolve by
/// (objective, lexicographic sequence), so enumeration order does not matter.
PromptSearchResult toy_optimal_prompt(const ToyLM& model, const std::vector<std::vector<int>>& eval_inputs,
                                      std::span<const int> golden_prefix, int max_prompt_len,
                                      EnumerationOrder order = EnumerationOrder::forward);

struct FeatureGapReconstruction {
  Eigen::VectorXd coeff_gap;  // beta - alpha
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  double residual = 0.0;  // |sum (beta_i - alpha_i) v_i - (h* - h)|
};

/// Minimum-norm coefficients of h and h* in a spanning set of feature vectors.
FeatureGapReconstruction feature_gap_reconstruction(const Eigen::VectorXd& h_star, const Eigen::VectorXd& h,
                                                    const std::vector<Eigen::VectorXd>& basis);

struct BoundSuiteConfig {
  int trials = 1000;
  std::uint64_t seed = 42;
  int v_min = 4;
  int v_max = 16;
  int d_min = 2;
  int d_max = 8;
  bool degenerate = false;  // h* = h in every draw
  double tolerance = 1e-9;
  // Toy prompt search run alongside the draws.
  int toy_vocab = 6;
  int toy_dim = 4;
  int toy_golden_len = 2;
  int toy_search_len = 2;
};

struct BoundDraw {
  std::uint64_t seed = 0;
  int vocab = 0;
  int dim = 0;
  UncertaintyBreakdown breakdown;
  ProofIntermediates proof;
  std::vector<std::string> violations;
};

struct BoundSuiteReport {
  BoundSuiteConfig config;
  std::vector<BoundDraw> draws;
  std::size_t violation_count = 0;
  double max_kl_over_bound = 0.0;
  double mean_spectral_over_frobenius = 0.0;
  PromptSearchResult toy;
  bool toy_recovered = false;
};

BoundSuiteReport run_bound_suite(const BoundSuiteConfig& cfg);
nlohmann::json to_json(const BoundSuiteReport& report);

}  // namespace fgaps::boundlab
