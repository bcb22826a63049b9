#include "fgaps/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fgaps/errors.hpp"
#include "fgaps/tensorio.hpp"

namespace fgaps {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, double y_max, const char* color,
                     const char* dash) {
  constexpr double kLeft = 60, kTop = 40, kWidth = 480, kHeight = 300;
  std::ostringstream out;
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"";
  if (*dash) out << " stroke-dasharray=\"" << dash << "\"";
  out << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", kLeft + pts[i].first * kWidth,
                  kTop + kHeight - (pts[i].second / y_max) * kHeight);
    out << (i ? " " : "") << buf;
  }
  out << "\"/>\n";
  return out.str();
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path) {
  std::string text = "sample_id,u,p_correct,s1,s2,s3\n";
  for (const auto& r : rows) {
    text += r.sample_id + "," + format_double(r.u) + "," + format_double(r.p_correct);
    for (double s : r.s) text += "," + format_double(s);
    text += "\n";
  }
  write_text_file(path, text);
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(Errc::SchemaError, "CSV has no column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::SchemaError, path.string() + " is empty");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw Error(Errc::SchemaError, path.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                                         std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string rejection_curve_svg(const RejectionCurve& curve, std::string_view title) {
  double y_max = 0.0;
  for (const auto& p : curve.points) y_max = std::max(y_max, p.second);
  for (const auto& p : curve.random_points) y_max = std::max(y_max, p.second);
  if (y_max <= 0.0) y_max = 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"400\" viewBox=\"0 0 600 400\">\n"
      << "<rect width=\"600\" height=\"400\" fill=\"white\"/>\n"
      << "<text x=\"300\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" << title
      << "</text>\n"
      << "<line x1=\"60\" y1=\"340\" x2=\"540\" y2=\"340\" stroke=\"black\"/>\n"
      << "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"340\" stroke=\"black\"/>\n"
      << "<text x=\"300\" y=\"375\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
         "rejected fraction</text>\n"
      << "<text x=\"20\" y=\"190\" transform=\"rotate(-90 20 190)\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\">retained error</text>\n"
      << "<text x=\"56\" y=\"44\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(y_max).substr(0, 6) << "</text>\n";
  svg << polyline(curve.random_points, y_max, "#888888", "6,4");
  svg << polyline(curve.oracle_points, y_max, "#2a9d8f", "2,3");
  svg << polyline(curve.points, y_max, "#e76f51", "");
  svg << "<text x=\"470\" y=\"60\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#e76f51\">method</text>\n"
      << "<text x=\"470\" y=\"75\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#2a9d8f\">oracle</text>\n"
      << "<text x=\"470\" y=\"90\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#888888\">random</text>\n"
      << "</svg>\n";
  return svg.str();
}

}  // namespace fgaps
