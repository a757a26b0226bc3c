#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace dclone {

inline constexpr const char* kToolVersion = "0.1.0";

// One record per CLI invocation, written next to the primary output as
// `<out>.run.json`.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::chrono::system_clock::time_point started_at;
  std::chrono::system_clock::time_point finished_at;
  int exit_code = 0;
  std::string error;
};

// sha256 of a file; for directories, of the sorted "relpath  sha256" listing.
std::string hash_input(const std::filesystem::path& path);
std::string iso8601_utc(std::chrono::system_clock::time_point t);
nlohmann::ordered_json to_json(const RunManifest& m);
std::filesystem::path run_manifest_path(const std::filesystem::path& output);
void write_run_manifest(const RunManifest& m, const std::filesystem::path& output);

// A report row as rendered: model label, dataset label, metric -> value.
struct ReportCell {
  std::string model;
  std::string dataset;
  std::map<std::string, double> values;
};

// Eval, probe and metrics JSON reports. Missing model/dataset labels fall back
// to the file stem.
ReportCell report_cell(const nlohmann::json& report, const std::string& fallback_label);
std::vector<ReportCell> load_report_cells(const std::vector<std::filesystem::path>& paths);

// Rows = models, columns = dataset x metric.
std::string render_table(const std::vector<ReportCell>& cells);

// One axis per dataset, one polygon per model, values of `metric` in [0, 1].
std::string render_spider(const std::vector<ReportCell>& cells, const std::string& metric = "top5");

}  // namespace dclone
