#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fgaps/metrics.hpp"

namespace fgaps {

// Shortest round-trippable representation ("%.17g").
std::string format_double(double x);

struct ScoreRow {
  std::string sample_id;
  double u = 0.0;
  double p_correct = 0.0;
  std::array<double, 3> s{};
};

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws SchemaError
};

// Plain comma-separated values with a header row; no quoting.
CsvTable read_csv(const std::filesystem::path& path);

// Static SVG with the method, oracle and random rejection curves.
std::string rejection_curve_svg(const RejectionCurve& curve, std::string_view title);

}  // namespace fgaps
