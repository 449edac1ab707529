#pragma once

// End-to-end orchestration shared by the CLI and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "teachaudit/report.hpp"

namespace teachaudit::pipeline {

/// Writes CSV, JSON and SVG renderings plus manifest.json into `out_dir`.
std::vector<report::EmittedFile> write_report(const report::ReportBundle& bundle, const std::filesystem::path& out_dir);

struct DemoOptions {
  std::filesystem::path out_dir;
  std::filesystem::path data_dir;  // holds fixtures/ and demo/
  bool offline = false;
  std::uint64_t seed = 7;
  std::size_t orderings = 10;
  std::size_t replicates = 2000;
  unsigned concurrency = 4;
  unsigned threads = 1;
};

struct DemoOutputs {
  std::vector<std::filesystem::path> runs;
  std::filesystem::path analysis;
  std::vector<report::EmittedFile> report_files;
};

/// Ranking (teacher and student roles) and generation against the bundled
/// mock model and fixture corpus, then analysis and report. Model replies
/// are cached under out_dir/cache; with `offline` only the cache is used.
DemoOutputs run_demo(const DemoOptions& options);

}  // namespace teachaudit::pipeline
