#include "fgaps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "fgaps/errors.hpp"

namespace fgaps {
namespace {

struct Counts {
  std::int64_t wrong = 0;
  std::int64_t correct = 0;
};

Counts count_classes(std::span<const EvalPair> pairs) {
  Counts c;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.u)) throw Error(Errc::NonFiniteInput, "uncertainty scores must be finite");
    if (p.correct != 0 && p.correct != 1) throw Error(Errc::InvalidArgument, "correct must be 0 or 1");
    (p.correct ? c.correct : c.wrong) += 1;
  }
  return c;
}

// Indices sorted by decreasing u; tie groups are contiguous.
std::vector<std::size_t> order_by_decreasing_u(std::span<const EvalPair> pairs) {
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pairs[a].u > pairs[b].u; });
  return idx;
}

double trapezoid(const std::vector<std::pair<double, double>>& pts, std::size_t n) {
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) area += 0.5 * (pts[k].second + pts[k + 1].second);
  return area / static_cast<double>(n);
}

}  // namespace

std::vector<EvalPair> make_pairs(std::span<const double> u, std::span<const int> correct) {
  if (u.size() != correct.size()) throw Error(Errc::ShapeMismatch, "scores and labels differ in length");
  std::vector<EvalPair> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = {u[i], correct[i]};
  return out;
}

double auroc(std::span<const EvalPair> pairs) {
  const Counts c = count_classes(pairs);
  if (c.wrong == 0 || c.correct == 0) throw Error(Errc::SingleClassLabels, "AUROC needs both classes");

  // Sweep groups in increasing u: a wrong sample beats every correct sample
  // below its group and half-beats those tied with it. Counted in halves so
  // the numerator is an exact integer.
  std::vector<std::size_t> idx = order_by_decreasing_u(pairs);
  std::reverse(idx.begin(), idx.end());
  std::int64_t twice_wins = 0;
  std::int64_t correct_below = 0;
  for (std::size_t g = 0; g < idx.size();) {
    std::size_t end = g;
    std::int64_t gw = 0;
    std::int64_t gc = 0;
    while (end < idx.size() && pairs[idx[end]].u == pairs[idx[g]].u) {
      (pairs[idx[end]].correct ? gc : gw) += 1;
      ++end;
    }
    twice_wins += gw * (2 * correct_below + gc);
    correct_below += gc;
    g = end;
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(c.wrong) * static_cast<double>(c.correct));
}

RejectionCurve rejection_curve(std::span<const EvalPair> pairs) {
  const Counts c = count_classes(pairs);
  const auto n = static_cast<std::int64_t>(pairs.size());
  if (c.wrong == 0) throw Error(Errc::DegenerateOracle, "every answer is correct; the oracle curve is flat");
  if (c.correct == 0) throw Error(Errc::SingleClassLabels, "every answer is wrong");

  const std::vector<std::size_t> idx = order_by_decreasing_u(pairs);
  const std::int64_t total_err = c.wrong;

  // Expected retained errors after k rejections, kept as the exact fraction
  // num / den so equal rationals divide to identical doubles.
  std::vector<std::int64_t> kept_num(static_cast<std::size_t>(n) + 1, total_err);
  std::vector<std::int64_t> kept_den(static_cast<std::size_t>(n) + 1, 1);
  std::int64_t before_group = 0;
  for (std::size_t g = 0; g < idx.size();) {
    std::size_t end = g;
    std::int64_t gw = 0;
    while (end < idx.size() && pairs[idx[end]].u == pairs[idx[g]].u) {
      gw += pairs[idx[end]].correct ? 0 : 1;
      ++end;
    }
    const auto gsize = static_cast<std::int64_t>(end - g);
    for (std::int64_t j = 1; j <= gsize; ++j) {
      kept_num[g + static_cast<std::size_t>(j)] = (total_err - before_group) * gsize - j * gw;
      kept_den[g + static_cast<std::size_t>(j)] = gsize;
    }
    before_group += gw;
    g = end;
  }

  RejectionCurve rc;
  rc.base_error = static_cast<double>(total_err) / static_cast<double>(n);
  rc.points.reserve(static_cast<std::size_t>(n) + 1);
  for (std::int64_t k = 0; k <= n; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(n);
    const std::int64_t retained = n - k;
    if (retained == 0) {
      rc.points.emplace_back(frac, 0.0);
      rc.oracle_points.emplace_back(frac, 0.0);
      rc.random_points.emplace_back(frac, 0.0);
      continue;
    }
    const auto kk = static_cast<std::size_t>(k);
    const double oracle_err = static_cast<double>(std::max<std::int64_t>(total_err - k, 0));
    rc.points.emplace_back(frac, static_cast<double>(kept_num[kk]) / static_cast<double>(kept_den[kk] * retained));
    rc.oracle_points.emplace_back(frac, oracle_err / static_cast<double>(retained));
    rc.random_points.emplace_back(frac, rc.base_error);
  }
  rc.area_method = trapezoid(rc.points, static_cast<std::size_t>(n));
  rc.area_oracle = trapezoid(rc.oracle_points, static_cast<std::size_t>(n));
  rc.area_random = trapezoid(rc.random_points, static_cast<std::size_t>(n));
  return rc;
}

double prr(std::span<const EvalPair> pairs) {
  if (pairs.size() < 2) throw Error(Errc::TooFewSamples, "PRR needs at least two samples");
  const RejectionCurve rc = rejection_curve(pairs);
  return (rc.area_random - rc.area_method) / (rc.area_random - rc.area_oracle);
}

nlohmann::json metrics_report(std::span<const EvalPair> pairs) {
  const RejectionCurve rc = rejection_curve(pairs);
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [f, e] : rc.points) curve.push_back({f, e});
  return {{"n", pairs.size()},
          {"auroc", auroc(pairs)},
          {"prr", (rc.area_random - rc.area_method) / (rc.area_random - rc.area_oracle)},
          {"base_error", rc.base_error},
          {"curve", curve}};
}

}  // namespace fgaps
