#include "divco/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "divco/config.hpp"
#include "divco/error.hpp"
#include "divco/trainer.hpp"

namespace divco::report {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string short_num(double v) { return fmt::format("{:.3g}", v); }

}  // namespace

std::string csv_comment() {
  return fmt::format("# {} {} jsd_log_base=e", kToolName, kToolVersion);
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += ',';
    out += cells[i];
  }
  return out;
}

std::vector<std::string> log_columns(std::size_t num_classes) {
  std::vector<std::string> cols{"iter", "d_loss", "g_loss_total", "g_loss_adv", "g_loss_reg"};
  for (auto& c : eval::metric_columns(num_classes)) cols.push_back(std::move(c));
  return cols;
}

std::string log_row(const train::Snapshot& s) {
  std::vector<std::string> cells{fmt::format("{}", s.iter), num(s.losses.d_loss),
                                 num(s.losses.g_total), num(s.losses.g_adv), num(s.losses.g_reg)};
  for (auto& v : eval::metric_values(s.metrics)) cells.push_back(std::move(v));
  return join(cells);
}

std::vector<std::string> result_columns(std::size_t num_classes) {
  std::vector<std::string> cols{"run_id", "mode", "seed", "lambda_contra", "tau", "radius"};
  for (auto& c : eval::metric_columns(num_classes)) cols.push_back(std::move(c));
  return cols;
}

std::string result_row(const ResultRow& r) {
  std::vector<std::string> cells{r.run_id,           losses::to_string(r.mode),
                                 fmt::format("{}", r.seed), num(r.lambda_contra),
                                 num(r.tau),         num(r.radius)};
  for (auto& v : eval::metric_values(r.metrics)) cells.push_back(std::move(v));
  return join(cells);
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows,
                       std::size_t num_classes) {
  std::string text = csv_comment() + "\n" + join(result_columns(num_classes)) + "\n";
  for (const auto& r : rows) text += result_row(r) + "\n";
  write_text(path, text);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path));
  CsvTable t;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header) {
      t.header = std::move(cells);
      header = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
  out << text;
  out.flush();
  if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

std::string scatter_svg(const std::vector<ScatterPanel>& panels, const synth::GmmSpec& spec,
                        Coloring coloring) {
  constexpr double kPanel = 320.0;
  constexpr double kPad = 40.0;
  constexpr double kTitle = 28.0;

  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
  double lo_y = lo_x, hi_y = -lo_x;
  auto grow = [&](const synth::Point2& p) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) return;
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  };
  for (const auto& cls : spec.classes) {
    for (const auto& m : cls) grow(m.mean);
  }
  for (const auto& panel : panels) {
    for (const auto& s : panel.points) grow(s.point);
  }
  if (!std::isfinite(lo_x)) lo_x = hi_x = lo_y = hi_y = 0.0;
  // Square, shared range for every panel.
  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  const double half = 0.5 * std::max({hi_x - lo_x, hi_y - lo_y, 1e-6}) * 1.05;
  const double x0 = cx - half, x1 = cx + half, y0 = cy - half, y1 = cy + half;

  const double width = kPad + static_cast<double>(panels.size()) * (kPanel + kPad);
  const double height = kTitle + kPanel + 2 * kPad;
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height, width, height);

  for (std::size_t i = 0; i < panels.size(); ++i) {
    const double left = kPad + static_cast<double>(i) * (kPanel + kPad);
    const double top = kTitle + kPad * 0.5;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * kPanel; };
    auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * kPanel; };

    svg += fmt::format("<g class=\"panel\" data-title=\"{}\" data-xmin=\"{}\" data-xmax=\"{}\" "
                       "data-ymin=\"{}\" data-ymax=\"{}\">\n",
                       escape(panels[i].title), num(x0), num(x1), num(y0), num(y1));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" "
                       "font-size=\"14\">{}</text>\n",
                       left + kPanel / 2, kTitle, escape(panels[i].title));
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" "
                       "fill=\"none\" stroke=\"#444\"/>\n",
                       left, top, kPanel, kPanel);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"start\">{}</text>\n", left,
                       top + kPanel + 14, short_num(x0));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n",
                       left + kPanel, top + kPanel + 14, short_num(x1));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 4,
                       top + kPanel, short_num(y0));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 4,
                       top + 10, short_num(y1));
    for (const auto& s : panels[i].points) {
      if (!std::isfinite(s.point[0]) || !std::isfinite(s.point[1])) continue;
      std::size_t color = s.label;
      if (coloring == Coloring::kMode) {
        std::size_t offset = 0;
        for (std::size_t c = 0; c < s.label && c < spec.num_classes(); ++c) {
          offset += spec.classes[c].size();
        }
        const std::size_t mode =
            s.mode ? *s.mode : synth::assign_mode(spec, s.point, s.label).mode;
        color = offset + mode;
      }
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.3\" fill=\"{}\" "
                         "fill-opacity=\"0.6\"/>\n",
                         px(s.point[0]), py(s.point[1]), kPalette[color % kPaletteSize]);
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           bool log_x) {
  constexpr double kW = 520.0, kH = 340.0;
  constexpr double kLeft = 70.0, kRight = 150.0, kTop = 40.0, kBottom = 50.0;
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;

  auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::vector<double> ticks;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
      if (std::find(ticks.begin(), ticks.end(), s.x[i]) == ticks.end()) ticks.push_back(s.x[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0.0;
  if (x1 - x0 < 1e-12) { x0 -= 0.5; x1 += 0.5; }
  if (y1 - y0 < 1e-12) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.08 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return kLeft + (tx(x) - x0) / (x1 - x0) * plot_w; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kW, kH, kW, kH);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     kLeft + plot_w / 2, escape(title));
  svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" "
                     "fill=\"none\" stroke=\"#444\"/>\n",
                     kLeft, kTop, plot_w, plot_h);
  std::sort(ticks.begin(), ticks.end());
  for (double t : ticks) {
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" "
                       "stroke=\"#ddd\"/>\n<text x=\"{0:.1f}\" y=\"{3:.1f}\" "
                       "text-anchor=\"middle\">{4}</text>\n",
                       px(t), kTop, kTop + plot_h, kTop + plot_h + 16, short_num(t));
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n",
                       kLeft - 6, py(v) + 4, short_num(v));
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + plot_w / 2, kH - 10, escape(x_label));
  svg += fmt::format("<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" "
                     "transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
                     kTop + plot_h / 2, kTop + plot_h / 2, escape(y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % kPaletteSize];
    std::string points;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    }
    svg += fmt::format("<g class=\"series\" data-label=\"{}\">\n", escape(s.label));
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       points, color);
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(s.x[i]),
                         py(s.y[i]), color);
    }
    svg += "</g>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" "
                       "stroke=\"{3}\" stroke-width=\"2\"/>\n<text x=\"{4:.1f}\" y=\"{5:.1f}\">{6}</text>\n",
                       kLeft + plot_w + 12, ly, kLeft + plot_w + 32, color, kLeft + plot_w + 38,
                       ly + 4, escape(s.label));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace divco::report
