#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "teachaudit/report.hpp"

namespace teachaudit::report {

namespace {

std::string xml_escape(std::string_view s) {
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

std::string attr(std::string_view name, double v) { return fmt::format(" {}=\"{}\"", name, format_number(v)); }

constexpr double kBarRow = 28;
constexpr double kBarLeft = 200;
constexpr double kBarWidth = 420;
constexpr double kBarTop = 56;

constexpr double kCellW = 110;
constexpr double kCellH = 36;
constexpr double kHeatLeft = 220;
constexpr double kHeatTop = 90;

// white -> dark red
std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const auto mix = [&](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  return fmt::format("#{:02x}{:02x}{:02x}", mix(255, 178), mix(255, 24), mix(255, 43));
}

}  // namespace

std::string render_bar_chart(const GroupReport& group, const SubgroupReport& subgroup) {
  const auto n = subgroup.members.size();
  const double height = kBarTop + kBarRow * static_cast<double>(n) + 48;
  const double width = kBarLeft + kBarWidth + 40;

  double extent = 1.0;
  for (const auto& m : subgroup.members) {
    extent = std::max({extent, std::abs(m.z), std::abs(m.z_ci.lo), std::abs(m.z_ci.hi)});
  }
  extent *= 1.1;
  const double center = kBarLeft + kBarWidth / 2;
  const auto x = [&](double v) { return center + v / extent * (kBarWidth / 2); };

  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
      "data-figure=\"bar\" data-model=\"{}\" data-dataset=\"{}\" data-role=\"{}\" data-subgroup=\"{}\" "
      "data-metric=\"{}\"{}{}>\n",
      width, height, width, height, xml_escape(group.model), xml_escape(group.dataset_or_task),
      xml_escape(group.role), xml_escape(subgroup.id), stats::to_string(group.metric), attr("data-mab", subgroup.mab),
      attr("data-mdb", subgroup.mdb));
  svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"#ffffff\"/>\n", width, height);
  svg += fmt::format(
      "<text x=\"{:.1f}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
      width / 2, xml_escape(subgroup.name + " - " + group.label()));
  svg += fmt::format(
      "<text x=\"{:.1f}\" y=\"40\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" "
      "fill=\"#555555\">normalized {} (z) with bootstrap CI; MAB {:.3f}, MDB {:.3f}</text>\n",
      width / 2, stats::to_string(group.metric), subgroup.mab, subgroup.mdb);

  const double plot_bottom = kBarTop + kBarRow * static_cast<double>(n);
  svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#333333\"/>\n", center,
                     kBarTop - 4, center, plot_bottom + 4);
  for (int tick = -1; tick <= 1; tick += 2) {
    const double v = std::floor(extent) * tick;
    if (v == 0) continue;
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
        "text-anchor=\"middle\">{:.0f}</text>\n",
        x(v), plot_bottom + 18, v);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = subgroup.members[i];
    const double y = kBarTop + kBarRow * static_cast<double>(i);
    const double mid = y + kBarRow / 2;
    const double x0 = x(0), xz = x(m.z);
    svg += fmt::format("<g class=\"bar\" data-characteristic=\"{}\"{}{}{}{}>\n", xml_escape(m.id), attr("data-z", m.z),
                       attr("data-ci-lo", m.z_ci.lo), attr("data-ci-hi", m.z_ci.hi), attr("data-point", m.point));
    svg += fmt::format(
        "  <text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
        "text-anchor=\"end\">{}</text>\n",
        kBarLeft - 8, mid + 4, xml_escape(m.phrase));
    svg += fmt::format("  <rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                       std::min(x0, xz), y + 5, std::abs(xz - x0), kBarRow - 10,
                       m.z >= 0 ? "#4878a8" : "#c0504d");
    const double lo = x(m.z_ci.lo), hi = x(m.z_ci.hi);
    svg += fmt::format("  <line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#000000\"/>\n", lo,
                       mid, hi, mid);
    for (double cap : {lo, hi}) {
      svg += fmt::format("  <line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#000000\"/>\n", cap,
                         mid - 5, cap, mid + 5);
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_heatmap(const ReportBundle& bundle, HeatmapMetric metric, HeatmapAxis axis) {
  // columns: demographic subgroups in first-seen order
  std::vector<std::pair<std::string, std::string>> columns;
  std::vector<std::string> rows;
  struct Cell {
    double sum = 0;
    std::size_t n = 0;
    bool degenerate = false;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;

  for (const auto& g : bundle.groups) {
    const auto& row = axis == HeatmapAxis::model ? g.model : g.dataset_or_task;
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    for (const auto& s : g.subgroups) {
      if (s.is_reference) continue;
      if (std::none_of(columns.begin(), columns.end(), [&](const auto& c) { return c.first == s.id; })) {
        columns.emplace_back(s.id, s.name);
      }
      if (!s.ok()) continue;
      auto& cell = cells[{row, s.id}];
      cell.sum += metric == HeatmapMetric::mab ? s.mab : s.mdb;
      ++cell.n;
      cell.degenerate = cell.degenerate || s.degenerate;
    }
  }

  double vmax = 0;
  for (const auto& [key, c] : cells) vmax = std::max(vmax, c.sum / static_cast<double>(c.n));
  if (vmax <= 0) vmax = 1;

  const char* metric_name = metric == HeatmapMetric::mab ? "MAB" : "MDB";
  const char* axis_name = axis == HeatmapAxis::model ? "model" : "dataset";
  const double width = kHeatLeft + kCellW * static_cast<double>(columns.size()) + 20;
  const double height = kHeatTop + kCellH * static_cast<double>(rows.size()) + 20;

  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
      "data-figure=\"heatmap\" data-metric=\"{}\" data-axis=\"{}\">\n",
      width, height, width, height, metric_name, axis_name);
  svg +=
      "<defs><pattern id=\"degenerate-hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
      "patternTransform=\"rotate(45)\"><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#444444\" "
      "stroke-width=\"1.5\"/></pattern></defs>\n";
  svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"#ffffff\"/>\n", width, height);
  svg += fmt::format(
      "<text x=\"{:.1f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{} per "
      "demographic subgroup by {} (unweighted mean over runs)</text>\n",
      width / 2, metric_name, axis_name);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"middle\">{}</text>\n",
        kHeatLeft + kCellW * (static_cast<double>(c) + 0.5), kHeatTop - 10, xml_escape(columns[c].second));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = kHeatTop + kCellH * static_cast<double>(r);
    svg += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
        "text-anchor=\"end\">{}</text>\n",
        kHeatLeft - 8, y + kCellH / 2 + 4, xml_escape(rows[r]));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const double x = kHeatLeft + kCellW * static_cast<double>(c);
      const auto it = cells.find({rows[r], columns[c].first});
      if (it == cells.end()) {
        svg += fmt::format(
            "<g class=\"cell\" data-row=\"{}\" data-subgroup=\"{}\" data-empty=\"true\"><rect x=\"{:.2f}\" "
            "y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#dddddd\" stroke=\"#ffffff\"/></g>\n",
            xml_escape(rows[r]), xml_escape(columns[c].first), x, y, kCellW, kCellH);
        continue;
      }
      const double value = it->second.sum / static_cast<double>(it->second.n);
      svg += fmt::format("<g class=\"cell\" data-row=\"{}\" data-subgroup=\"{}\"{} data-n=\"{}\" data-degenerate=\"{}\">",
                         xml_escape(rows[r]), xml_escape(columns[c].first), attr("data-value", value), it->second.n,
                         it->second.degenerate ? "true" : "false");
      svg += fmt::format(
          "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" stroke=\"#ffffff\"/>", x, y,
          kCellW, kCellH, heat_color(value / vmax));
      if (it->second.degenerate) {
        svg += fmt::format(
            "<rect class=\"degenerate\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
            "fill=\"url(#degenerate-hatch)\"/>",
            x, y, kCellW, kCellH);
      }
      svg += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"middle\">{:.2f}</text></g>\n",
          x + kCellW / 2, y + kCellH / 2 + 4, value);
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace teachaudit::report
