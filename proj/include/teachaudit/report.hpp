#pragma once

// Analysis bundle (points, z, MAB/MDB, intervals, Friedman per subgroup and
// per run) and its CSV / JSON / SVG renderings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachaudit/biasstats.hpp"
#include "teachaudit/cohort.hpp"
#include "teachaudit/taskrunner.hpp"

namespace teachaudit::report {

struct MemberRow {
  std::string id;
  std::string phrase;
  double point = 0;
  double z = 0;
  stats::Interval z_ci;
  stats::Interval point_ci;
  std::size_t n_trials = 0;
  std::size_t n_retained = 0;
  std::size_t n_full_refusals = 0;
};

struct SubgroupReport {
  std::string id;
  std::string name;
  bool is_reference = false;
  std::vector<MemberRow> members;
  double mab = 0;
  double mdb = 0;
  stats::Interval mab_ci;
  stats::Interval mdb_ci;
  bool degenerate = false;
  std::size_t replicates_used = 0;
  std::size_t replicates_dropped = 0;
  std::optional<stats::FriedmanResult> friedman;
  std::string friedman_error;
  std::string error;  // set when the subgroup could not be scored at all

  bool ok() const { return error.empty(); }
};

/// One (model, dataset-or-task, role) analysis.
struct GroupReport {
  std::string model;
  std::string dataset_or_task;
  std::string role;
  stats::MetricKind metric = stats::MetricKind::mcv;
  std::size_t n_trials = 0;
  std::vector<SubgroupReport> subgroups;

  std::string label() const { return model + " / " + dataset_or_task + " / " + role; }
};

struct ReportBundle {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<GroupReport> groups;

  nlohmann::json to_json() const;
  static ReportBundle from_json(const nlohmann::json& j);
  static ReportBundle load(const std::filesystem::path& path);
};

struct AnalyzeOptions {
  std::size_t replicates = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

GroupReport analyze_table(const stats::ScoreTable& table, const cohort::Cohort& cohort, std::string model,
                          std::string dataset_or_task, std::string role, const AnalyzeOptions& options);
GroupReport analyze_run(const runner::RunResults& run, const cohort::Cohort& cohort, const AnalyzeOptions& options);

struct NamedRun {
  std::string file;  // file name only, recorded in the manifest
  std::string sha256;
  runner::RunResults results;
};

ReportBundle analyze(const std::vector<NamedRun>& runs, const cohort::Cohort& cohort, const AnalyzeOptions& options);
/// Every *.jsonl file in `runs_dir`, in file-name order. Throws NoRuns.
ReportBundle analyze_runs_dir(const std::filesystem::path& runs_dir, const cohort::Cohort& cohort,
                              const AnalyzeOptions& options);

enum class Format { csv, json, svg };

struct EmittedFile {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::size_t bytes = 0;
};

std::string to_csv(const ReportBundle& bundle);

/// Writes the bundle in `format` under `out_dir`. Output bytes depend only
/// on the bundle.
std::vector<EmittedFile> emit(const ReportBundle& bundle, Format format, const std::filesystem::path& out_dir);
nlohmann::json file_manifest(const std::vector<EmittedFile>& files);

// SVG figures. Every plotted number is repeated verbatim in data-* attributes.
std::string render_bar_chart(const GroupReport& group, const SubgroupReport& subgroup);
enum class HeatmapMetric { mab, mdb };
enum class HeatmapAxis { model, dataset };
std::string render_heatmap(const ReportBundle& bundle, HeatmapMetric metric, HeatmapAxis axis);

/// Number formatting shared by JSON, CSV and SVG data attributes.
std::string format_number(double v);

/// Partitions records by topic label; unlabeled subjects go to "unlabeled".
/// Each slice keeps the metadata, with the dataset renamed "<dataset>@<topic>".
std::map<std::string, runner::RankingResults> topic_slice(const runner::RankingResults& results,
                                                          const std::map<std::string, std::string>& topic_labels);

}  // namespace teachaudit::report
