#include "fgaps/boundlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "fgaps/errors.hpp"
#include "fgaps/linalg.hpp"

namespace fgaps::boundlab {
namespace {

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw Error(Errc::NonFiniteInput, std::string(what) + " is not finite");
}

void check_inputs(const ProjectionHead& head, const Eigen::VectorXd& h_star, const Eigen::VectorXd& h) {
  require_finite(h_star, "h_star");
  require_finite(h, "h");
  if (!head.w.allFinite()) throw Error(Errc::NonFiniteInput, "projection matrix is not finite");
  if (h_star.size() != head.dim() || h.size() != head.dim()) {
    throw Error(Errc::ShapeMismatch, "hidden states must match the projection width");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

// Sequences of exactly `len` tokens, as base-V counters.
std::vector<int> sequence_at(std::uint64_t index, int len, int vocab) {
  std::vector<int> seq(static_cast<std::size_t>(len));
  for (int pos = len - 1; pos >= 0; --pos) {
    seq[static_cast<std::size_t>(pos)] = static_cast<int>(index % static_cast<std::uint64_t>(vocab));
    index /= static_cast<std::uint64_t>(vocab);
  }
  return seq;
}

}  // namespace

ProjectionHead::ProjectionHead(Eigen::MatrixXd weights)
    : w(std::move(weights)), spectral_norm(linalg::spectral_norm(w)), frobenius_norm(w.norm()) {}

double log_sum_exp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  return logits.array() - log_sum_exp(logits);
}

Eigen::VectorXd softmax_distribution(const ProjectionHead& head, const Eigen::VectorXd& h) {
  require_finite(h, "h");
  if (h.size() != head.dim()) throw Error(Errc::ShapeMismatch, "h must match the projection width");
  const Eigen::VectorXd logits = head.w * h;
  require_finite(logits, "logits");
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

double kl_from_logs(const Eigen::VectorXd& log_p, const Eigen::VectorXd& log_q) {
  // sum_i p_i (x_i - 1 - log x_i) with x = q/p equals KL because sum (q - p) = 0,
  // and each term is non-negative as computed.
  double kl = 0.0;
  for (Eigen::Index i = 0; i < log_p.size(); ++i) {
    const double p = std::exp(log_p(i));
    const double delta = log_q(i) - log_p(i);
    if (delta <= 50.0) {
      kl += p * (std::expm1(delta) - delta);
    } else {
      kl += std::exp(log_q(i)) - p - p * delta;
    }
  }
  return kl;
}

UncertaintyBreakdown uncertainty_breakdown(const ProjectionHead& head, const Eigen::VectorXd& h_star,
                                           const Eigen::VectorXd& h) {
  check_inputs(head, h_star, h);
  const Eigen::VectorXd log_p_star = log_softmax(head.w * h_star);
  const Eigen::VectorXd log_p = log_softmax(head.w * h);
  const Eigen::VectorXd p_star = log_p_star.array().exp();

  UncertaintyBreakdown out;
  out.total = -p_star.dot(log_p);
  out.aleatoric = -p_star.dot(log_p_star);
  out.epistemic = kl_from_logs(log_p_star, log_p);
  const double gap = (h_star - h).norm();
  out.bound = 2.0 * head.spectral_norm * gap;
  out.frobenius_bound = 2.0 * head.frobenius_norm * gap;
  return out;
}

ProofIntermediates proof_intermediates(const ProjectionHead& head, const Eigen::VectorXd& h_star,
                                       const Eigen::VectorXd& h) {
  check_inputs(head, h_star, h);
  const Eigen::VectorXd logits_star = head.w * h_star;
  const Eigen::VectorXd logits = head.w * h;
  const Eigen::VectorXd p_star = log_softmax(logits_star).array().exp();
  const Eigen::VectorXd shift = head.w * (h_star - h);

  ProofIntermediates out;
  out.term1 = p_star.dot(shift);
  out.term1_bound = shift.norm();
  out.term2 = log_sum_exp(logits) - log_sum_exp(logits_star);
  out.lse_gap = std::abs(out.term2);
  out.norm_bound = head.spectral_norm * (h_star - h).norm();
  return out;
}

ToyLM ToyLM::random(int vocab, int dim, std::uint64_t seed) {
  if (vocab < 2 || vocab > 16 || dim < 1 || dim > 8) {
    throw Error(Errc::InvalidArgument, "toy model needs 2 <= V <= 16 and 1 <= d <= 8");
  }
  std::mt19937_64 rng(seed);
  ToyLM m;
  m.embedding = gaussian(rng, vocab, dim, 1.0);
  Eigen::MatrixXd r = gaussian(rng, dim, dim, 1.0);
  m.recurrent = 0.9 * r / linalg::spectral_norm(r);
  m.bias = gaussian(rng, dim, 1, 0.1).col(0);
  m.head = ProjectionHead(gaussian(rng, vocab, dim, 2.0));
  return m;
}

Eigen::VectorXd ToyLM::final_state(std::span<const int> tokens) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(embedding.cols());
  for (int t : tokens) {
    if (t < 0 || t >= vocab()) throw Error(Errc::InvalidArgument, "token outside vocabulary");
    s = (recurrent * s + embedding.row(t).transpose() + bias).array().tanh();
  }
  return s;
}

Eigen::VectorXd ToyLM::log_distribution(std::span<const int> tokens) const {
  return log_softmax(head.w * final_state(tokens));
}

Eigen::VectorXd ToyLM::distribution(std::span<const int> tokens) const {
  return log_distribution(tokens).array().exp();
}

PromptSearchResult toy_optimal_prompt(const ToyLM& model, const std::vector<std::vector<int>>& eval_inputs,
                                      std::span<const int> golden_prefix, int max_prompt_len,
                                      EnumerationOrder order) {
  if (max_prompt_len < 0) throw Error(Errc::InvalidArgument, "max_prompt_len must be >= 0");
  if (eval_inputs.empty()) throw Error(Errc::InvalidArgument, "need at least one eval input");
  const int vocab = model.vocab();
  if (max_prompt_len > 3 || std::pow(static_cast<double>(vocab), max_prompt_len) > 65536.0) {
    throw Error(Errc::SearchSpaceTooLarge, "V^len = " + std::to_string(vocab) + "^" +
                                               std::to_string(max_prompt_len) + " exceeds the desk-scale guard");
  }

  // Target distributions: the model behind the hidden golden prefix.
  std::vector<Eigen::VectorXd> target;
  target.reserve(eval_inputs.size());
  for (const auto& x : eval_inputs) {
    std::vector<int> seq(golden_prefix.begin(), golden_prefix.end());
    seq.insert(seq.end(), x.begin(), x.end());
    target.push_back(model.log_distribution(seq));
  }

  auto objective = [&](const std::vector<int>& prompt) {
    double total = 0.0;
    std::vector<int> seq;
    for (std::size_t i = 0; i < eval_inputs.size(); ++i) {
      seq.assign(prompt.begin(), prompt.end());
      seq.insert(seq.end(), eval_inputs[i].begin(), eval_inputs[i].end());
      total += kl_from_logs(target[i], model.log_distribution(seq));
    }
    return total / static_cast<double>(eval_inputs.size());
  };

  PromptSearchResult out;
  std::vector<double> best_at_len(static_cast<std::size_t>(max_prompt_len) + 1,
                                  std::numeric_limits<double>::infinity());
  bool have_best = false;

  auto consider = [&](const std::vector<int>& prompt) {
    const double obj = objective(prompt);
    ++out.evaluated;
    auto& len_best = best_at_len[prompt.size()];
    len_best = std::min(len_best, obj);
    if (!have_best || obj < out.objective || (obj == out.objective && prompt < out.s_star)) {
      out.objective = obj;
      out.s_star = prompt;
      have_best = true;
    }
  };

  std::vector<int> lengths(static_cast<std::size_t>(max_prompt_len) + 1);
  for (int k = 0; k <= max_prompt_len; ++k) lengths[static_cast<std::size_t>(k)] = k;
  if (order == EnumerationOrder::reverse) std::reverse(lengths.begin(), lengths.end());

  for (int len : lengths) {
    std::uint64_t count = 1;
    for (int k = 0; k < len; ++k) count *= static_cast<std::uint64_t>(vocab);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t index = order == EnumerationOrder::forward ? i : count - 1 - i;
      consider(sequence_at(index, len, vocab));
    }
  }

  out.kl_curve.resize(best_at_len.size());
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < best_at_len.size(); ++k) {
    running = std::min(running, best_at_len[k]);
    out.kl_curve[k] = running;
  }
  return out;
}

FeatureGapReconstruction feature_gap_reconstruction(const Eigen::VectorXd& h_star, const Eigen::VectorXd& h,
                                                    const std::vector<Eigen::VectorXd>& basis) {
  const Eigen::Index d = h.size();
  require_finite(h_star, "h_star");
  require_finite(h, "h");
  if (h_star.size() != d) throw Error(Errc::ShapeMismatch, "h and h_star differ in dimension");
  if (static_cast<Eigen::Index>(basis.size()) < d) {
    throw Error(Errc::RankDeficientBasis, "need at least d feature vectors");
  }
  Eigen::MatrixXd b(d, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (basis[i].size() != d) throw Error(Errc::ShapeMismatch, "feature vectors must have dimension d");
    b.col(static_cast<Eigen::Index>(i)) = basis[i];
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(b);
  cod.setThreshold(1e-10);
  if (cod.rank() < d) {
    throw Error(Errc::RankDeficientBasis, "feature vectors span rank " + std::to_string(cod.rank()) + " < " +
                                              std::to_string(d));
  }
  FeatureGapReconstruction out;
  out.alpha = cod.solve(h);
  out.beta = cod.solve(h_star);
  out.coeff_gap = out.beta - out.alpha;
  out.residual = (b * out.coeff_gap - (h_star - h)).norm();
  return out;
}

BoundSuiteReport run_bound_suite(const BoundSuiteConfig& cfg) {
  if (cfg.trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (cfg.v_min < 2 || cfg.v_max < cfg.v_min || cfg.d_min < 1 || cfg.d_max < cfg.d_min) {
    throw Error(Errc::InvalidArgument, "invalid V/d ranges");
  }
  BoundSuiteReport report;
  report.config = cfg;
  const double tol = cfg.tolerance;
  double ratio_sum = 0.0;

  for (int i = 0; i < cfg.trials; ++i) {
    BoundDraw draw;
    draw.seed = splitmix64(cfg.seed ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(i + 1)));
    std::mt19937_64 rng(draw.seed);
    draw.vocab = std::uniform_int_distribution<int>(cfg.v_min, cfg.v_max)(rng);
    draw.dim = std::uniform_int_distribution<int>(cfg.d_min, cfg.d_max)(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double w_scale = 0.1 + 2.9 * unit(rng);
    const double h_scale = 0.5 + 2.5 * unit(rng);
    const ProjectionHead head(gaussian(rng, draw.vocab, draw.dim, w_scale));
    const Eigen::VectorXd h = gaussian(rng, draw.dim, 1, h_scale).col(0);
    Eigen::VectorXd h_star;
    if (cfg.degenerate) {
      h_star = h;
    } else if (i % 2 == 0) {
      h_star = h + gaussian(rng, draw.dim, 1, 2.0 * unit(rng)).col(0);
    } else {
      h_star = gaussian(rng, draw.dim, 1, h_scale).col(0);
    }

    draw.breakdown = uncertainty_breakdown(head, h_star, h);
    draw.proof = proof_intermediates(head, h_star, h);
    const auto& b = draw.breakdown;
    const auto& p = draw.proof;
    if (std::abs(b.total - (b.aleatoric + b.epistemic)) > tol) draw.violations.emplace_back("decomposition");
    if (b.epistemic < 0.0) draw.violations.emplace_back("negative_kl");
    if (b.aleatoric < 0.0) draw.violations.emplace_back("negative_entropy");
    if (b.epistemic > b.bound + tol) draw.violations.emplace_back("kl_bound");
    if (p.term1 > p.term1_bound + tol) draw.violations.emplace_back("term1_cauchy_schwarz");
    if (p.lse_gap > p.term1_bound + tol) draw.violations.emplace_back("lse_mean_value");
    if (p.term1_bound > p.norm_bound + tol) draw.violations.emplace_back("operator_norm");
    if (std::abs(b.epistemic - (p.term1 + p.term2)) > tol) draw.violations.emplace_back("kl_split");
    if (head.spectral_norm > head.frobenius_norm + tol) draw.violations.emplace_back("spectral_le_frobenius");

    if (b.bound > 0.0) report.max_kl_over_bound = std::max(report.max_kl_over_bound, b.epistemic / b.bound);
    ratio_sum += head.frobenius_norm > 0.0 ? head.spectral_norm / head.frobenius_norm : 1.0;
    report.violation_count += draw.violations.size();
    report.draws.push_back(std::move(draw));
  }
  report.mean_spectral_over_frobenius = ratio_sum / cfg.trials;

  // Constructed ideal model: the toy LM behind a golden prefix drawn from the same seed.
  std::mt19937_64 rng(splitmix64(cfg.seed));
  const ToyLM toy = ToyLM::random(cfg.toy_vocab, cfg.toy_dim, splitmix64(cfg.seed + 1));
  std::uniform_int_distribution<int> token(0, cfg.toy_vocab - 1);
  std::vector<int> golden(static_cast<std::size_t>(cfg.toy_golden_len));
  for (int& t : golden) t = token(rng);
  std::vector<std::vector<int>> inputs;
  for (int k = 0; k < 8; ++k) {
    std::vector<int> x(static_cast<std::size_t>(1 + k % 3));
    for (int& t : x) t = token(rng);
    inputs.push_back(std::move(x));
  }
  report.toy = toy_optimal_prompt(toy, inputs, golden, cfg.toy_search_len);
  bool monotone = true;
  for (std::size_t k = 1; k < report.toy.kl_curve.size(); ++k)
    monotone = monotone && report.toy.kl_curve[k] <= report.toy.kl_curve[k - 1];
  report.toy_recovered = cfg.toy_golden_len <= cfg.toy_search_len
                             ? (report.toy.s_star == golden && report.toy.objective <= 1e-12)
                             : true;
  if (!monotone || !report.toy_recovered) ++report.violation_count;
  return report;
}

nlohmann::json to_json(const BoundSuiteReport& report) {
  using nlohmann::json;
  const auto& c = report.config;
  json draws = json::array();
  for (const auto& d : report.draws) {
    draws.push_back({{"seed", d.seed},
                     {"V", d.vocab},
                     {"d", d.dim},
                     {"total", d.breakdown.total},
                     {"aleatoric", d.breakdown.aleatoric},
                     {"epistemic", d.breakdown.epistemic},
                     {"bound", d.breakdown.bound},
                     {"frobenius_bound", d.breakdown.frobenius_bound},
                     {"term1", d.proof.term1},
                     {"term1_bound", d.proof.term1_bound},
                     {"term2", d.proof.term2},
                     {"lse_gap", d.proof.lse_gap},
                     {"violations", d.violations}});
  }
  return {{"config",
           {{"trials", c.trials},
            {"seed", c.seed},
            {"v_range", {c.v_min, c.v_max}},
            {"d_range", {c.d_min, c.d_max}},
            {"degenerate", c.degenerate},
            {"tolerance", c.tolerance}}},
          {"violation_count", report.violation_count},
          {"max_kl_over_bound", report.max_kl_over_bound},
          {"mean_spectral_over_frobenius", report.mean_spectral_over_frobenius},
          {"toy_prompt_search",
           {{"vocab", c.toy_vocab},
            {"golden_len", c.toy_golden_len},
            {"search_len", c.toy_search_len},
            {"s_star", report.toy.s_star},
            {"objective", report.toy.objective},
            {"kl_curve", report.toy.kl_curve},
            {"evaluated", report.toy.evaluated},
            {"recovered", report.toy_recovered}}},
          {"draws", draws}};
}

}  // namespace fgaps::boundlab
