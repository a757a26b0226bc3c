#include "dclone/report.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fmt/format.h>
#include <numbers>
#include <set>
#include <sstream>

#include "dclone/error.hpp"
#include "dclone/hash.hpp"
#include "dclone/io.hpp"

namespace dclone {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string hash_input(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_file_hex(path);
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    lines.push_back(fs::relative(e.path(), path).generic_string() + "  " + sha256_file_hex(e.path()));
  }
  std::sort(lines.begin(), lines.end());
  std::string listing;
  for (const auto& l : lines) listing += l + "\n";
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(listing.data()), listing.size()));
}

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  const auto secs = std::chrono::time_point_cast<std::chrono::milliseconds>(t);
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  const auto ms = secs.time_since_epoch().count() % 1000;
  return fmt::format("{}.{:03}Z", buf, ms);
}

ordered_json to_json(const RunManifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  ordered_json inputs = ordered_json::array();
  for (const auto& p : m.inputs) {
    ordered_json in{{"path", p.string()}};
    try {
      in["sha256"] = hash_input(p);
    } catch (const std::exception& ex) {
      in["sha256"] = nullptr;
      in["error"] = ex.what();
    }
    inputs.push_back(in);
  }
  j["inputs"] = inputs;
  ordered_json outputs = ordered_json::array();
  for (const auto& p : m.outputs) outputs.push_back(p.string());
  j["outputs"] = outputs;
  j["started_at"] = iso8601_utc(m.started_at);
  j["finished_at"] = iso8601_utc(m.finished_at);
  j["exit_code"] = m.exit_code;
  if (!m.error.empty()) j["error"] = m.error;
  j["version"] = kToolVersion;
  return j;
}

fs::path run_manifest_path(const fs::path& output) {
  fs::path p = output;
  if (p.has_filename()) {
    p += ".run.json";
  } else {
    p = p.parent_path();
    p += ".run.json";
  }
  return p;
}

void write_run_manifest(const RunManifest& m, const fs::path& output) {
  const auto path = run_manifest_path(output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, to_json(m).dump(2) + "\n");
}

namespace {

const std::vector<std::string>& metric_keys() {
  static const std::vector<std::string> keys{"accuracy", "sparsity", "intra_class_l2", "redundancy",
                                             "coding_length"};
  return keys;
}

std::string fmt_value(double v) { return fmt::format("{:.4f}", v); }

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

template <typename F>
std::vector<std::string> unique_in_order(const std::vector<ReportCell>& cells, F field) {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    const std::string& v = field(c);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

}  // namespace

ReportCell report_cell(const json& report, const std::string& fallback) {
  if (!report.is_object()) fail(ErrorCode::kParse, "report must be a JSON object");
  ReportCell c;
  auto label = [&](const char* key) {
    if (report.contains(key) && report.at(key).is_string() && !report.at(key).get<std::string>().empty()) {
      return report.at(key).get<std::string>();
    }
    return fallback;
  };
  c.model = label("model");
  c.dataset = report.contains("dataset_group") ? label("dataset_group") : label("dataset");
  for (const auto& [k, v] : report.items()) {
    const bool topk = k.size() > 3 && k.starts_with("top") &&
                      std::all_of(k.begin() + 3, k.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
    const bool known = std::find(metric_keys().begin(), metric_keys().end(), k) != metric_keys().end();
    if ((topk || known) && v.is_number()) c.values[k] = v.get<double>();
  }
  if (c.values.empty()) fail(ErrorCode::kParse, "report '" + fallback + "' has no metric values");
  return c;
}

std::vector<ReportCell> load_report_cells(const std::vector<fs::path>& paths) {
  std::vector<ReportCell> cells;
  for (const auto& p : paths) {
    json j;
    try {
      j = json::parse(read_file_text(p));
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParse, p.string() + ": " + ex.what());
    }
    cells.push_back(report_cell(j, p.stem().string()));
  }
  return cells;
}

std::string render_table(const std::vector<ReportCell>& cells) {
  if (cells.empty()) fail(ErrorCode::kInvalidArgument, "no reports to render");
  const auto models = unique_in_order(cells, [](const ReportCell& c) -> const std::string& { return c.model; });
  const auto datasets = unique_in_order(cells, [](const ReportCell& c) -> const std::string& { return c.dataset; });
  std::vector<std::pair<std::string, std::string>> columns;
  for (const auto& ds : datasets) {
    std::set<std::string> keys;
    for (const auto& c : cells) {
      if (c.dataset != ds) continue;
      for (const auto& [k, v] : c.values) keys.insert(k);
    }
    for (const auto& k : keys) columns.emplace_back(ds, k);
  }
  std::ostringstream out;
  out << "| model |";
  for (const auto& [ds, k] : columns) out << ' ' << ds << ' ' << k << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& m : models) {
    out << "| " << m << " |";
    for (const auto& [ds, k] : columns) {
      std::string cell = "-";
      for (const auto& c : cells) {
        if (c.model == m && c.dataset == ds && c.values.contains(k)) cell = fmt_value(c.values.at(k));
      }
      out << ' ' << cell << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::string render_spider(const std::vector<ReportCell>& cells, const std::string& metric) {
  if (cells.empty()) fail(ErrorCode::kInvalidArgument, "no reports to render");
  const auto models = unique_in_order(cells, [](const ReportCell& c) -> const std::string& { return c.model; });
  const auto datasets = unique_in_order(cells, [](const ReportCell& c) -> const std::string& { return c.dataset; });
  double vmax = 1.0;
  bool any = false;
  for (const auto& c : cells) {
    if (c.values.contains(metric)) {
      vmax = std::max(vmax, c.values.at(metric));
      any = true;
    }
  }
  if (!any) fail(ErrorCode::kInvalidArgument, "no report carries metric '" + metric + "'");

  constexpr double kSize = 640.0;
  constexpr double kCx = kSize / 2;
  constexpr double kCy = kSize / 2;
  constexpr double kRadius = 220.0;
  const auto axes = datasets.size();
  auto point = [&](std::size_t i, double frac) {
    const double ang = -std::numbers::pi / 2 + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(axes);
    return std::pair{kCx + kRadius * frac * std::cos(ang), kCy + kRadius * frac * std::sin(ang)};
  };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream svg;
  svg << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">)", kSize)
      << '\n';
  svg << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  for (int ring = 1; ring <= 4; ++ring) {
    svg << "<polygon class=\"grid\" fill=\"none\" stroke=\"#ccc\" points=\"";
    for (std::size_t i = 0; i < axes; ++i) {
      const auto [x, y] = point(i, ring / 4.0);
      svg << fmt::format("{:.2f},{:.2f} ", x, y);
    }
    svg << "\"/>\n";
  }
  for (std::size_t i = 0; i < axes; ++i) {
    const auto [x, y] = point(i, 1.0);
    const auto [lx, ly] = point(i, 1.12);
    svg << fmt::format(R"(<line class="axis" x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#888"/>)",
                       kCx, kCy, x, y)
        << '\n';
    svg << fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="13" text-anchor="middle">{}</text>)", lx, ly,
                       xml_escape(datasets[i]))
        << '\n';
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    const char* color = palette[m % std::size(palette)];
    svg << fmt::format(R"(<polygon class="model" data-model="{}" fill="{}" fill-opacity="0.15" stroke="{}" stroke-width="2" points=")",
                       xml_escape(models[m]), color, color);
    for (std::size_t i = 0; i < axes; ++i) {
      double v = 0.0;
      for (const auto& c : cells) {
        if (c.model == models[m] && c.dataset == datasets[i] && c.values.contains(metric)) v = c.values.at(metric);
      }
      const auto [x, y] = point(i, std::clamp(v / vmax, 0.0, 1.0));
      svg << fmt::format("{:.2f},{:.2f} ", x, y);
    }
    svg << "\"/>\n";
    svg << fmt::format(R"(<text x="12" y="{}" font-size="13" fill="{}">{}</text>)", 20 + 16 * m, color,
                       xml_escape(models[m]))
        << '\n';
  }
  svg << fmt::format(R"(<text x="{:.0f}" y="{:.0f}" font-size="12" text-anchor="end">{}</text>)", kSize - 12,
                     kSize - 12, xml_escape(metric))
      << '\n';
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dclone
