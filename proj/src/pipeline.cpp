#include "teachaudit/pipeline.hpp"

#include <fstream>

#include "teachaudit/cohort.hpp"
#include "teachaudit/corpus.hpp"
#include "teachaudit/errors.hpp"
#include "teachaudit/modelgate.hpp"
#include "teachaudit/taskrunner.hpp"

namespace teachaudit::pipeline {

namespace fs = std::filesystem;

std::vector<report::EmittedFile> write_report(const report::ReportBundle& bundle, const fs::path& out_dir) {
  std::vector<report::EmittedFile> files;
  for (auto format : {report::Format::json, report::Format::csv, report::Format::svg}) {
    auto emitted = report::emit(bundle, format, out_dir);
    files.insert(files.end(), emitted.begin(), emitted.end());
  }
  std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  out << report::file_manifest(files).dump(2) << '\n';
  return files;
}

DemoOutputs run_demo(const DemoOptions& options) {
  const auto dataset = corpus::load_dataset(options.data_dir / "fixtures" / "leveled_corpus.jsonl");
  const auto cohort = cohort::default_cohort();
  auto cfg = gate::ModelConfig::load(options.data_dir / "demo" / "mock_model.json");
  cfg.offline = options.offline;
  cfg.concurrency = options.concurrency;
  gate::Gateway gateway(cfg, options.out_dir / "cache");

  DemoOutputs outputs;
  const auto runs_dir = options.out_dir / "runs";
  for (auto role : {prompt::Role::teacher, prompt::Role::student}) {
    const auto path = runs_dir / ("ranking-" + std::string(prompt::to_string(role)) + ".jsonl");
    std::optional<runner::RankingResults> previous;
    if (fs::exists(path)) {
      auto loaded = runner::read_results_file(path);
      if (auto* r = std::get_if<runner::RankingResults>(&loaded)) previous = std::move(*r);
    }
    runner::RankingOptions ro;
    ro.role = role;
    ro.n_orderings = options.orderings;
    ro.seed = options.seed;
    ro.resume = previous ? &*previous : nullptr;
    const auto results = runner::run_ranking(dataset, cohort, gateway, ro);
    runner::write_results_file(results, path);
    outputs.runs.push_back(path);
  }

  std::vector<std::string> topics;
  for (const auto& s : dataset.subjects) topics.push_back(s.title);
  const auto generation = runner::run_generation(topics, cohort, gateway);
  const auto gen_path = runs_dir / "generation.jsonl";
  runner::write_results_file(generation, gen_path);
  outputs.runs.push_back(gen_path);

  const auto bundle =
      report::analyze_runs_dir(runs_dir, cohort, {options.replicates, 0.95, options.seed, options.threads});
  outputs.analysis = options.out_dir / "analysis.json";
  {
    std::ofstream out(outputs.analysis, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + outputs.analysis.string());
    out << bundle.to_json().dump(2) << '\n';
  }
  outputs.report_files = write_report(bundle, options.out_dir / "report");
  return outputs;
}

}  // namespace teachaudit::pipeline
