#include "teachaudit/report.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "teachaudit/digest.hpp"
#include "teachaudit/errors.hpp"
#include "teachaudit/rng.hpp"
#include "teachaudit/scores.hpp"

namespace teachaudit::report {

using nlohmann::json;

namespace {

json interval_json(const stats::Interval& iv) { return json::array({iv.lo, iv.hi}); }

stats::Interval interval_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string slug(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
    else if (!out.empty() && out.back() != '-') out.push_back('-');
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "x" : out;
}

EmittedFile write_file(const std::filesystem::path& out_dir, const std::string& rel, const std::string& content) {
  const auto path = out_dir / rel;
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
  return {rel, sha256_hex(content), content.size()};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string format_number(double v) { return json(v).dump(); }

// ------------------------------------------------------------------ analysis

GroupReport analyze_table(const stats::ScoreTable& table, const cohort::Cohort& cohort, std::string model,
                          std::string dataset_or_task, std::string role, const AnalyzeOptions& options) {
  GroupReport g;
  g.model = std::move(model);
  g.dataset_or_task = std::move(dataset_or_task);
  g.role = std::move(role);
  g.metric = table.kind;
  for (const auto& [id, n] : table.trials) g.n_trials += n;

  std::map<std::string, stats::SubgroupIntervals> intervals;
  try {
    intervals = stats::bootstrap_intervals(
        table, cohort, {options.replicates, options.level, options.seed, options.threads});
  } catch (const NoData&) {
  }

  for (const auto& sg : cohort.subgroups()) {
    SubgroupReport s;
    s.id = sg.id;
    s.name = sg.name;
    s.is_reference = sg.is_reference;
    try {
      const auto scored = stats::score_subgroup(table.points(sg), sg);
      s.mab = scored.mab;
      s.mdb = scored.mdb;
      s.degenerate = scored.degenerate;
      s.mab_ci = {s.mab, s.mab};
      s.mdb_ci = {s.mdb, s.mdb};
      const auto iv = intervals.find(sg.id);
      for (const auto& id : sg.characteristic_ids) {
        MemberRow m;
        m.id = id;
        m.phrase = cohort.characteristic(id).phrase;
        m.point = scored.points.at(id);
        m.z = scored.z.at(id);
        m.z_ci = {m.z, m.z};
        m.point_ci = {m.point, m.point};
        if (iv != intervals.end()) {
          m.z_ci = iv->second.z.at(id);
          m.point_ci = iv->second.point.at(id);
        }
        m.n_trials = table.trials.count(id) ? table.trials.at(id) : 0;
        m.n_retained = table.retained(id);
        m.n_full_refusals = table.full_refusals.count(id) ? table.full_refusals.at(id) : 0;
        s.members.push_back(std::move(m));
      }
      if (iv != intervals.end()) {
        s.mab_ci = iv->second.mab;
        s.mdb_ci = iv->second.mdb;
        s.replicates_used = iv->second.replicates_used;
        s.replicates_dropped = iv->second.replicates_dropped;
      }
    } catch (const Error& e) {
      s.members.clear();
      s.error = e.what();
    }
    try {
      s.friedman = stats::friedman(table, sg);
    } catch (const Error& e) {
      s.friedman_error = e.what();
    }
    g.subgroups.push_back(std::move(s));
  }
  return g;
}

GroupReport analyze_run(const runner::RunResults& run, const cohort::Cohort& cohort, const AnalyzeOptions& options) {
  return std::visit(
      [&](const auto& r) {
        const auto table = stats::score_table(r);
        const auto& m = r.metadata;
        return analyze_table(table, cohort, m.model_id, m.dataset, m.role, options);
      },
      run);
}

ReportBundle analyze(const std::vector<NamedRun>& runs, const cohort::Cohort& cohort, const AnalyzeOptions& options) {
  if (runs.empty()) throw NoRuns("no runs to analyze");
  ReportBundle bundle;
  json run_list = json::array();
  for (const auto& run : runs) {
    const auto& meta = std::visit([](const auto& r) -> const runner::RunMetadata& { return r.metadata; }, run.results);
    const auto n = std::visit([](const auto& r) { return r.records.size(); }, run.results);
    run_list.push_back({{"file", run.file},
                        {"sha256", run.sha256},
                        {"task", meta.task},
                        {"model_id", meta.model_id},
                        {"dataset", meta.dataset},
                        {"role", meta.role},
                        {"seed", meta.seed},
                        {"generator_id", meta.generator_id},
                        {"cohort_version", meta.cohort_version},
                        {"templates_digest", meta.templates_digest},
                        {"records", n}});
    bundle.groups.push_back(analyze_run(run.results, cohort, options));
  }
  bundle.manifest = {{"generator_id", std::string(kGeneratorId)},
                     {"seed", options.seed},
                     {"replicates", options.replicates},
                     {"level", options.level},
                     {"cohort_version", cohort.version()},
                     {"cohort_sha256", sha256_hex(cohort.to_json().dump())},
                     {"runs", std::move(run_list)}};
  return bundle;
}

ReportBundle analyze_runs_dir(const std::filesystem::path& runs_dir, const cohort::Cohort& cohort,
                              const AnalyzeOptions& options) {
  if (!std::filesystem::is_directory(runs_dir)) throw NoRuns("runs directory not found: " + runs_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw NoRuns("no *.jsonl results in " + runs_dir.string());
  std::vector<NamedRun> runs;
  for (const auto& f : files) {
    const auto bytes = read_file(f);
    std::istringstream in(bytes);
    runs.push_back({f.filename().string(), sha256_hex(bytes), runner::read_results(in)});
  }
  return analyze(runs, cohort, options);
}

// ------------------------------------------------------------- serialization

json ReportBundle::to_json() const {
  json groups_json = json::array();
  for (const auto& g : groups) {
    json subgroups = json::array();
    for (const auto& s : g.subgroups) {
      json sj = {{"id", s.id}, {"name", s.name}, {"is_reference", s.is_reference}};
      if (!s.ok()) {
        sj["error"] = s.error;
      } else {
        json members = json::array();
        for (const auto& m : s.members) {
          members.push_back({{"id", m.id},
                             {"phrase", m.phrase},
                             {"point", m.point},
                             {"z", m.z},
                             {"ci_lo", m.z_ci.lo},
                             {"ci_hi", m.z_ci.hi},
                             {"point_ci", interval_json(m.point_ci)},
                             {"n_trials", m.n_trials},
                             {"n_retained", m.n_retained},
                             {"n_full_refusals", m.n_full_refusals}});
        }
        sj["members"] = std::move(members);
        sj["mab"] = s.mab;
        sj["mab_ci"] = interval_json(s.mab_ci);
        sj["mdb"] = s.mdb;
        sj["mdb_ci"] = interval_json(s.mdb_ci);
        sj["degenerate"] = s.degenerate;
        sj["replicates_used"] = s.replicates_used;
        sj["replicates_dropped"] = s.replicates_dropped;
      }
      if (s.friedman) {
        sj["friedman"] = {{"Q", s.friedman->q},
                          {"df", s.friedman->df},
                          {"p", s.friedman->p},
                          {"blocks", s.friedman->blocks},
                          {"dropped", s.friedman->dropped}};
      } else {
        sj["friedman"] = nullptr;
        sj["friedman_error"] = s.friedman_error;
      }
      subgroups.push_back(std::move(sj));
    }
    groups_json.push_back({{"model", g.model},
                           {"dataset_or_task", g.dataset_or_task},
                           {"role", g.role},
                           {"metric", stats::to_string(g.metric)},
                           {"n_trials", g.n_trials},
                           {"subgroups", std::move(subgroups)}});
  }
  return {{"manifest", manifest}, {"groups", std::move(groups_json)}};
}

ReportBundle ReportBundle::from_json(const json& j) {
  ReportBundle b;
  try {
    b.manifest = j.at("manifest");
    for (const auto& gj : j.at("groups")) {
      GroupReport g;
      g.model = gj.at("model").get<std::string>();
      g.dataset_or_task = gj.at("dataset_or_task").get<std::string>();
      g.role = gj.at("role").get<std::string>();
      g.metric = gj.at("metric").get<std::string>() == "MGL" ? stats::MetricKind::mgl : stats::MetricKind::mcv;
      g.n_trials = gj.value("n_trials", std::size_t{0});
      for (const auto& sj : gj.at("subgroups")) {
        SubgroupReport s;
        s.id = sj.at("id").get<std::string>();
        s.name = sj.at("name").get<std::string>();
        s.is_reference = sj.value("is_reference", false);
        if (sj.contains("error")) {
          s.error = sj.at("error").get<std::string>();
        } else {
          for (const auto& mj : sj.at("members")) {
            MemberRow m;
            m.id = mj.at("id").get<std::string>();
            m.phrase = mj.value("phrase", m.id);
            m.point = mj.at("point").get<double>();
            m.z = mj.at("z").get<double>();
            m.z_ci = {mj.at("ci_lo").get<double>(), mj.at("ci_hi").get<double>()};
            m.point_ci = interval_from(mj.at("point_ci"));
            m.n_trials = mj.value("n_trials", std::size_t{0});
            m.n_retained = mj.value("n_retained", std::size_t{0});
            m.n_full_refusals = mj.value("n_full_refusals", std::size_t{0});
            s.members.push_back(std::move(m));
          }
          s.mab = sj.at("mab").get<double>();
          s.mab_ci = interval_from(sj.at("mab_ci"));
          s.mdb = sj.at("mdb").get<double>();
          s.mdb_ci = interval_from(sj.at("mdb_ci"));
          s.degenerate = sj.value("degenerate", false);
          s.replicates_used = sj.value("replicates_used", std::size_t{0});
          s.replicates_dropped = sj.value("replicates_dropped", std::size_t{0});
        }
        if (!sj.at("friedman").is_null()) {
          const auto& fj = sj.at("friedman");
          s.friedman = stats::FriedmanResult{fj.at("Q").get<double>(), fj.at("df").get<int>(),
                                             fj.at("p").get<double>(), fj.at("blocks").get<std::size_t>(),
                                             fj.at("dropped").get<std::size_t>()};
        } else {
          s.friedman_error = sj.value("friedman_error", std::string());
        }
        g.subgroups.push_back(std::move(s));
      }
      b.groups.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("analysis JSON: ") + e.what());
  }
  return b;
}

ReportBundle ReportBundle::load(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------------ CSV

std::string to_csv(const ReportBundle& bundle) {
  std::ostringstream out;
  out << "model,dataset_or_task,role,subgroup,characteristic_or_SUMMARY,point,z,ci_lo,ci_hi,mab,mdb,friedman_p,"
         "n_trials,n_full_refusals\n";
  for (const auto& g : bundle.groups) {
    const std::string prefix =
        csv_field(g.model) + "," + csv_field(g.dataset_or_task) + "," + csv_field(g.role) + ",";
    for (const auto& s : g.subgroups) {
      const std::string p = s.friedman ? format_number(s.friedman->p) : "";
      std::size_t trials = 0, refusals = 0;
      for (const auto& m : s.members) {
        out << prefix << csv_field(s.id) << ',' << csv_field(m.id) << ',' << format_number(m.point) << ','
            << format_number(m.z) << ',' << format_number(m.z_ci.lo) << ',' << format_number(m.z_ci.hi)
            << ",,,," << m.n_trials << ',' << m.n_full_refusals << '\n';
        trials += m.n_trials;
        refusals += m.n_full_refusals;
      }
      out << prefix << csv_field(s.id) << ",SUMMARY,,,,,";
      if (s.ok()) out << format_number(s.mab) << ',' << format_number(s.mdb);
      else out << ',';
      out << ',' << p << ',' << trials << ',' << refusals << '\n';
    }
  }
  return out.str();
}

// ----------------------------------------------------------------------- emit

std::vector<EmittedFile> emit(const ReportBundle& bundle, Format format, const std::filesystem::path& out_dir) {
  std::vector<EmittedFile> files;
  switch (format) {
    case Format::json:
      files.push_back(write_file(out_dir, "analysis.json", bundle.to_json().dump(2) + "\n"));
      break;
    case Format::csv:
      files.push_back(write_file(out_dir, "analysis.csv", to_csv(bundle)));
      break;
    case Format::svg: {
      std::set<std::string> used;
      for (const auto& g : bundle.groups) {
        for (const auto& s : g.subgroups) {
          if (!s.ok()) continue;
          auto name = "figures/bar_" + slug(g.label()) + "__" + slug(s.id);
          auto unique = name;
          for (int k = 2; !used.insert(unique).second; ++k) unique = name + "-" + std::to_string(k);
          files.push_back(write_file(out_dir, unique + ".svg", render_bar_chart(g, s)));
        }
      }
      for (auto metric : {HeatmapMetric::mab, HeatmapMetric::mdb}) {
        for (auto axis : {HeatmapAxis::model, HeatmapAxis::dataset}) {
          const std::string name = std::string("figures/heatmap_") + (metric == HeatmapMetric::mab ? "mab" : "mdb") +
                                   "_by_" + (axis == HeatmapAxis::model ? "model" : "dataset") + ".svg";
          files.push_back(write_file(out_dir, name, render_heatmap(bundle, metric, axis)));
        }
      }
      break;
    }
  }
  return files;
}

json file_manifest(const std::vector<EmittedFile>& files) {
  json list = json::array();
  for (const auto& f : files) list.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"files", std::move(list)}};
}

// --------------------------------------------------------------------- topics

std::map<std::string, runner::RankingResults> topic_slice(const runner::RankingResults& results,
                                                          const std::map<std::string, std::string>& topic_labels) {
  std::map<std::string, runner::RankingResults> slices;
  for (const auto& r : results.records) {
    const auto it = topic_labels.find(r.spec.subject_id);
    const std::string topic = it == topic_labels.end() ? "unlabeled" : it->second;
    auto [slot, inserted] = slices.try_emplace(topic);
    if (inserted) {
      slot->second.metadata = results.metadata;
      slot->second.metadata.dataset = results.metadata.dataset + "@" + topic;
    }
    slot->second.records.push_back(r);
  }
  return slices;
}

}  // namespace teachaudit::report
