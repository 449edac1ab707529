// audit: command-line front end for the teacher-bias audit pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 endpoint error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "teachaudit/cohort.hpp"
#include "teachaudit/corpus.hpp"
#include "teachaudit/errors.hpp"
#include "teachaudit/modelgate.hpp"
#include "teachaudit/pipeline.hpp"
#include "teachaudit/readability.hpp"
#include "teachaudit/report.hpp"
#include "teachaudit/taskrunner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace teachaudit;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kEndpoint = 3;

struct ModelFlags {
  std::string config_path;
  std::string endpoint;
  std::string model;
  unsigned concurrency = 0;
  bool offline = false;
  std::string cache_dir;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--model-config", f.config_path, "model config JSON (default: neutral mock)");
  cmd->add_option("--endpoint", f.endpoint, "override endpoint URL, or mock:");
  cmd->add_option("--model", f.model, "override model id");
  cmd->add_option("--concurrency", f.concurrency, "max in-flight requests (default 4)");
  cmd->add_flag("--offline", f.offline, "serve from the response cache only");
  cmd->add_option("--cache-dir", f.cache_dir, "response cache directory (default: <out dir>/cache)");
}

gate::ModelConfig model_config(const ModelFlags& f) {
  gate::ModelConfig cfg = f.config_path.empty() ? gate::ModelConfig{} : gate::ModelConfig::load(f.config_path);
  if (!f.endpoint.empty()) cfg.endpoint = f.endpoint;
  if (!f.model.empty()) cfg.model_id = f.model;
  if (f.concurrency > 0) cfg.concurrency = f.concurrency;
  cfg.offline = cfg.offline || f.offline;
  cfg.validate();
  return cfg;
}

fs::path cache_dir_for(const ModelFlags& f, const fs::path& out) {
  if (!f.cache_dir.empty()) return f.cache_dir;
  const auto parent = out.parent_path();
  return (parent.empty() ? fs::path(".") : parent) / "cache";
}

cohort::Cohort load_cohort_or_default(const std::string& path) {
  return path.empty() ? cohort::default_cohort() : cohort::load_cohort(path);
}

corpus::DatasetKind parse_kind(const std::string& s) {
  if (s == "text") return corpus::DatasetKind::text;
  if (s == "math") return corpus::DatasetKind::math;
  throw CLI::ValidationError("--kind", "expected text or math");
}

report::Format parse_format(const std::string& s) {
  if (s == "csv") return report::Format::csv;
  if (s == "json") return report::Format::json;
  if (s == "svg") return report::Format::svg;
  throw CLI::ValidationError("--format", "expected csv, json or svg");
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
}

void print_refusals(const runner::RankingResults& results) {
  for (const auto& [id, s] : runner::refusal_stats(results)) {
    std::printf("  %-22s trials=%zu chosen=%zu full_refusal=%zu partial=%zu unparseable=%zu\n", id.c_str(), s.trials,
                s.chosen, s.full_refusals, s.partial_refusals, s.unparseable);
  }
}

// CSV field quoting for the readability export.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit language models for differential treatment of students"};
  app.require_subcommand(1);

  // validate
  std::string v_dataset, v_kind = "text";
  auto* validate = app.add_subcommand("validate", "check a leveled dataset");
  validate->add_option("--dataset", v_dataset)->required();
  validate->add_option("--kind", v_kind, "text or math");

  // rank
  std::string r_dataset, r_cohort, r_role = "teacher", r_out, r_templates, r_markers, r_resume;
  std::size_t r_orderings = 10;
  std::uint64_t r_seed = 0;
  bool r_distinct = false;
  ModelFlags r_model;
  auto* rank = app.add_subcommand("rank", "run the ranking task");
  rank->add_option("--dataset", r_dataset)->required();
  rank->add_option("--cohort", r_cohort, "cohort JSON (default: bundled cohort)");
  rank->add_option("--role", r_role, "teacher or student");
  rank->add_option("--orderings", r_orderings, "random level orderings per subject");
  rank->add_flag("--distinct", r_distinct, "require distinct orderings per subject");
  rank->add_option("--seed", r_seed);
  rank->add_option("--out", r_out, "raw results JSONL")->required();
  rank->add_option("--templates", r_templates, "directory of template overrides");
  rank->add_option("--refusal-markers", r_markers, "file with one refusal marker per line");
  add_model_flags(rank, r_model);

  // generate
  std::string g_dataset, g_topics, g_cohort, g_out, g_templates;
  ModelFlags g_model;
  auto* generate = app.add_subcommand("generate", "run the generation task");
  generate->add_option("--dataset", g_dataset, "take topics from subject titles");
  generate->add_option("--topics", g_topics, "file with one topic per line");
  generate->add_option("--cohort", g_cohort);
  generate->add_option("--out", g_out)->required();
  generate->add_option("--templates", g_templates);
  add_model_flags(generate, g_model);

  // readability
  std::string rd_in, rd_out;
  auto* readab = app.add_subcommand("readability", "per-document text statistics and grade levels");
  readab->add_option("--in", rd_in, "JSONL of {\"id\", \"text\"}")->required();
  readab->add_option("--out", rd_out, "CSV output")->required();

  // analyze
  std::string a_runs, a_cohort, a_out;
  std::size_t a_bootstrap = 2000;
  std::uint64_t a_seed = 0;
  double a_level = 0.95;
  unsigned a_threads = 1;
  auto* analyze = app.add_subcommand("analyze", "score runs and compute bias statistics");
  analyze->add_option("--runs", a_runs, "directory of raw results JSONL")->required();
  analyze->add_option("--cohort", a_cohort);
  analyze->add_option("--bootstrap", a_bootstrap, "bootstrap replicates");
  analyze->add_option("--level", a_level, "interval coverage");
  analyze->add_option("--seed", a_seed);
  analyze->add_option("--threads", a_threads);
  analyze->add_option("--out", a_out, "analysis JSON")->required();

  // report
  std::string p_analysis, p_out;
  std::vector<std::string> p_formats;
  auto* rep = app.add_subcommand("report", "render tables and figures from an analysis");
  rep->add_option("--analysis", p_analysis)->required();
  rep->add_option("--format", p_formats, "csv, json and/or svg (default: all)");
  rep->add_option("--out", p_out, "output directory")->required();

  // topics
  std::string t_results, t_dataset, t_labels, t_out;
  auto* topics = app.add_subcommand("topics", "split ranking results by topic label");
  topics->add_option("--results", t_results)->required();
  topics->add_option("--dataset", t_dataset, "take labels from the dataset's topic fields");
  topics->add_option("--labels", t_labels, "JSON object subject_id -> topic");
  topics->add_option("--out", t_out, "output directory")->required();

  // adjudicate
  std::string j_results, j_file, j_out;
  auto* adjud = app.add_subcommand("adjudicate", "apply human decisions to unparseable responses");
  adjud->add_option("--results", j_results)->required();
  adjud->add_option("--adjudications", j_file)->required();
  adjud->add_option("--out", j_out)->required();

  // demo
  std::string d_out, d_data = TEACHAUDIT_DATA_DIR;
  bool d_offline = false;
  std::size_t d_replicates = 2000;
  auto* demo = app.add_subcommand("demo", "full pipeline on the bundled mock model and fixture corpus");
  demo->add_option("--out", d_out)->required();
  demo->add_option("--data-dir", d_data);
  demo->add_option("--bootstrap", d_replicates);
  demo->add_flag("--offline", d_offline, "replay from out/cache only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) {
      std::ifstream in(v_dataset);
      if (!in) throw IoError("cannot open " + v_dataset);
      // Parse without the loader's validation so every violation is listed.
      std::vector<corpus::LeveledSubject> subjects;
      std::size_t line_no = 0;
      for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          subjects.push_back(corpus::subject_from_json(json::parse(line)));
        } catch (const std::exception& e) {
          throw ParseError(v_dataset + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
      corpus::Dataset d{fs::path(v_dataset).stem().string(), 0, std::move(subjects), parse_kind(v_kind)};
      if (!d.subjects.empty()) d.level_count = static_cast<int>(d.subjects.front().explanations.size());
      const auto report = corpus::validate_dataset(d);
      for (const auto& v : report.violations) {
        std::printf("%s%s%s: %s\n", v.subject_id.empty() ? "dataset" : v.subject_id.c_str(),
                    v.level ? " level " : "", v.level ? std::to_string(*v.level).c_str() : "", v.reason.c_str());
      }
      std::printf("%zu subjects, %d levels, %zu violations\n", report.subjects_checked, d.level_count,
                  report.violations.size());
      return report.ok() ? kOk : kData;
    }

    if (*rank) {
      const auto dataset = corpus::load_dataset(r_dataset);
      const auto cohort = load_cohort_or_default(r_cohort);
      const fs::path out = r_out;
      gate::Gateway gateway(model_config(r_model), cache_dir_for(r_model, out));
      runner::RankingOptions ro;
      ro.role = prompt::role_from_string(r_role);
      ro.n_orderings = r_orderings;
      ro.distinct_orderings = r_distinct;
      ro.seed = r_seed;
      if (!r_templates.empty()) ro.templates = prompt::TemplateSet::load_dir(r_templates);
      if (!r_markers.empty()) ro.refusal_markers = runner::load_refusal_markers(r_markers);
      std::optional<runner::RankingResults> previous;
      if (fs::exists(out)) {
        auto loaded = runner::read_results_file(out);
        if (auto* r = std::get_if<runner::RankingResults>(&loaded)) previous = std::move(*r);
      }
      ro.resume = previous ? &*previous : nullptr;
      const auto results = runner::run_ranking(dataset, cohort, gateway, ro);
      runner::write_results_file(results, out);
      std::size_t failed = 0;
      for (const auto& r : results.records) failed += r.error.empty() ? 0 : 1;
      std::printf("%zu trials written to %s\n", results.records.size(), r_out.c_str());
      print_refusals(results);
      if (failed > 0) {
        std::fprintf(stderr, "%zu trials failed at the endpoint; rerun to resume\n", failed);
        return kEndpoint;
      }
      return kOk;
    }

    if (*generate) {
      std::vector<std::string> topic_list;
      if (!g_topics.empty()) topic_list = read_lines(g_topics);
      if (!g_dataset.empty()) {
        for (const auto& s : corpus::load_dataset(g_dataset).subjects) topic_list.push_back(s.title);
      }
      if (topic_list.empty()) throw CLI::ValidationError("generate", "--topics or --dataset is required");
      const auto cohort = load_cohort_or_default(g_cohort);
      const fs::path out = g_out;
      gate::Gateway gateway(model_config(g_model), cache_dir_for(g_model, out));
      runner::GenerationOptions go;
      if (!g_templates.empty()) go.templates = prompt::TemplateSet::load_dir(g_templates);
      const auto results = runner::run_generation(topic_list, cohort, gateway, go);
      runner::write_results_file(results, out);
      std::size_t failed = 0;
      for (const auto& r : results.records) failed += r.error.empty() ? 0 : 1;
      std::printf("%zu generations written to %s\n", results.records.size(), g_out.c_str());
      return failed > 0 ? kEndpoint : kOk;
    }

    if (*readab) {
      std::ifstream in(rd_in);
      if (!in) throw IoError("cannot open " + rd_in);
      std::ostringstream csv;
      csv << "id,sentences,words,syllables,letters,complex_words,fkgl,fog,coleman_liau,tgl\n";
      std::size_t line_no = 0;
      for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string id, text;
        try {
          const auto j = json::parse(line);
          id = j.contains("id") ? (j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump())
                                : std::to_string(line_no);
          text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
          throw ParseError(rd_in + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const auto s = readability::analyze(text);
        csv << csv_field(id) << ',' << s.sentences << ',' << s.words << ',' << s.syllables << ',' << s.letters << ','
            << s.complex_words;
        try {
          const auto g = readability::grade(s);
          csv << ',' << report::format_number(g.fkgl) << ',' << report::format_number(g.fog) << ','
              << report::format_number(g.coleman_liau) << ',' << report::format_number(g.tgl) << '\n';
        } catch (const DegenerateText&) {
          csv << ",,,,\n";
        }
      }
      write_text(rd_out, csv.str());
      return kOk;
    }

    if (*analyze) {
      const auto cohort = load_cohort_or_default(a_cohort);
      const auto bundle = report::analyze_runs_dir(a_runs, cohort, {a_bootstrap, a_level, a_seed, a_threads});
      write_text(a_out, bundle.to_json().dump(2) + "\n");
      for (const auto& g : bundle.groups) {
        std::printf("%s (%s)\n", g.label().c_str(), std::string(stats::to_string(g.metric)).c_str());
        for (const auto& s : g.subgroups) {
          if (!s.ok()) {
            std::printf("  %-12s error: %s\n", s.id.c_str(), s.error.c_str());
            continue;
          }
          std::printf("  %-12s MAB=%.4f MDB=%.4f%s", s.id.c_str(), s.mab, s.mdb, s.degenerate ? " (degenerate)" : "");
          if (s.friedman) std::printf(" friedman p=%.3g", s.friedman->p);
          std::printf("\n");
        }
      }
      return kOk;
    }

    if (*rep) {
      const auto bundle = report::ReportBundle::load(p_analysis);
      if (p_formats.empty()) {
        const auto files = pipeline::write_report(bundle, p_out);
        std::printf("%zu files written to %s\n", files.size() + 1, p_out.c_str());
        return kOk;
      }
      std::vector<report::EmittedFile> files;
      for (const auto& f : p_formats) {
        auto emitted = report::emit(bundle, parse_format(f), p_out);
        files.insert(files.end(), emitted.begin(), emitted.end());
      }
      write_text(fs::path(p_out) / "manifest.json", report::file_manifest(files).dump(2) + "\n");
      std::printf("%zu files written to %s\n", files.size() + 1, p_out.c_str());
      return kOk;
    }

    if (*topics) {
      auto loaded = runner::read_results_file(t_results);
      auto* results = std::get_if<runner::RankingResults>(&loaded);
      if (!results) throw InvariantError(t_results + " is not a ranking run");
      std::map<std::string, std::string> labels;
      if (!t_dataset.empty()) {
        for (const auto& s : corpus::load_dataset(t_dataset).subjects) {
          if (s.topic_label) labels[s.subject_id] = *s.topic_label;
        }
      }
      if (!t_labels.empty()) {
        std::ifstream in(t_labels);
        if (!in) throw IoError("cannot open " + t_labels);
        try {
          for (const auto& [k, v] : json::parse(in).items()) labels[k] = v.get<std::string>();
        } catch (const json::exception& e) {
          throw ParseError(t_labels + ": " + e.what());
        }
      }
      for (const auto& [topic, slice] : report::topic_slice(*results, labels)) {
        const auto path = fs::path(t_out) / (topic + ".jsonl");
        runner::write_results_file(slice, path);
        std::printf("%-20s %zu records -> %s\n", topic.c_str(), slice.records.size(), path.string().c_str());
      }
      return kOk;
    }

    if (*adjud) {
      auto loaded = runner::read_results_file(j_results);
      auto* results = std::get_if<runner::RankingResults>(&loaded);
      if (!results) throw InvariantError(j_results + " is not a ranking run");
      const auto updated = runner::adjudicate(std::move(*results), j_file);
      runner::write_results_file(updated, j_out);
      print_refusals(updated);
      return kOk;
    }

    if (*demo) {
      pipeline::DemoOptions opts;
      opts.out_dir = d_out;
      opts.data_dir = d_data;
      opts.offline = d_offline;
      opts.replicates = d_replicates;
      const auto outputs = pipeline::run_demo(opts);
      for (const auto& r : outputs.runs) std::printf("run      %s\n", r.string().c_str());
      std::printf("analysis %s\n", outputs.analysis.string().c_str());
      std::printf("report   %zu files under %s\n", outputs.report_files.size() + 1, (fs::path(d_out) / "report").string().c_str());
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const EndpointFailure& e) {
    std::fprintf(stderr, "endpoint error: %s\n", e.what());
    return kEndpoint;
  } catch (const PreconditionError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  }
  return kUsage;
}
