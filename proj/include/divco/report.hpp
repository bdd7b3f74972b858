#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "divco/eval.hpp"
#include "divco/losses.hpp"
#include "divco/synthdata.hpp"

namespace divco::train {
struct Snapshot;
}

namespace divco::report {

// First line of every CSV file: tool version and the log base of JSD.
std::string csv_comment();

std::vector<std::string> log_columns(std::size_t num_classes);
std::string log_row(const train::Snapshot& s);
std::string join(const std::vector<std::string>& cells);

// One trained run, as listed in compare/sweep/eval tables.
struct ResultRow {
  std::string run_id;
  losses::LossMode mode = losses::LossMode::kDivco;
  std::uint64_t seed = 0;
  double lambda_contra = 0.0;
  double tau = 0.0;
  double radius = 0.0;
  eval::MetricsReport metrics;
};

std::vector<std::string> result_columns(std::size_t num_classes);
std::string result_row(const ResultRow& r);
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows,
                       std::size_t num_classes);

// Minimal CSV reader for files written above: skips '#' lines, returns the
// header and the data rows split on commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::string& path);

// ---- SVG -------------------------------------------------------------------

struct ScatterPanel {
  std::string title;
  std::vector<synth::LabeledSample> points;
};

enum class Coloring { kClass, kMode };

// Panels side by side, all sharing one axis range (the union of the data
// bounds with a 5% margin).
std::string scatter_svg(const std::vector<ScatterPanel>& panels, const synth::GmmSpec& spec,
                        Coloring coloring);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Line chart with markers; log_x spaces the x axis logarithmically.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           bool log_x);

void write_text(const std::string& path, const std::string& text);

}  // namespace divco::report
