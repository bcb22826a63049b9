#pragma once

#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fgaps {

struct EvalPair {
  double u = 0.0;   // uncertainty, higher = less trustworthy
  int correct = 0;  // 1 = correct answer
};

std::vector<EvalPair> make_pairs(std::span<const double> u, std::span<const int> correct);

/// P(u_wrong > u_correct) over all (wrong, correct) pairs, ties counted 1/2.
double auroc(std::span<const EvalPair> pairs);

// Retained mean error after rejecting the k highest-uncertainty samples,
// sampled at k = 0..N (fraction k/N). An empty retained set has error 0.
struct RejectionCurve {
  std::vector<std::pair<double, double>> points;  // method
  std::vector<std::pair<double, double>> oracle_points;
  std::vector<std::pair<double, double>> random_points;
  double area_method = 0.0;
  double area_oracle = 0.0;
  double area_random = 0.0;
  double base_error = 0.0;
};

/// Ties in u are resolved by the expectation over uniformly random orderings
/// within each tie group, so the curve is deterministic.
RejectionCurve rejection_curve(std::span<const EvalPair> pairs);

/// (A_random - A_method) / (A_random - A_oracle); 1 for a perfect ranking,
/// 0 in expectation for uninformative scores, possibly negative.
double prr(std::span<const EvalPair> pairs);

// {n, auroc, prr, base_error, curve: [[frac, err], ...]}
nlohmann::json metrics_report(std::span<const EvalPair> pairs);

}  // namespace fgaps
