#include "teachaudit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "teachaudit/errors.hpp"
#include "teachaudit/rng.hpp"

namespace teachaudit::corpus {

using nlohmann::json;

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void check_subject(const LeveledSubject& subject, int level_count, std::vector<Violation>& out) {
  const auto& id = subject.subject_id;
  if (id.empty()) out.push_back({id, std::nullopt, "empty subject_id"});
  if (static_cast<int>(subject.explanations.size()) != level_count) {
    out.push_back({id, std::nullopt,
                   "has " + std::to_string(subject.explanations.size()) + " levels, expected " +
                       std::to_string(level_count)});
  }
  std::set<int> seen;
  for (const auto& e : subject.explanations) {
    if (e.level < 1 || e.level > level_count) {
      out.push_back({id, e.level, "level " + std::to_string(e.level) + " outside 1.." +
                                      std::to_string(level_count)});
    } else if (!seen.insert(e.level).second) {
      out.push_back({id, e.level, "duplicate level " + std::to_string(e.level)});
    }
    if (blank(e.text)) {
      out.push_back({id, e.level, "empty text at level " + std::to_string(e.level)});
    }
  }
}

}  // namespace

const Explanation& LeveledSubject::at_level(int level) const {
  for (const auto& e : explanations) {
    if (e.level == level) return e;
  }
  throw std::out_of_range("subject " + subject_id + " has no level " + std::to_string(level));
}

LeveledSubject subject_from_json(const json& record) {
  LeveledSubject subject;
  subject.subject_id = record.at("subject_id").get<std::string>();
  subject.title = record.at("title").get<std::string>();
  if (auto it = record.find("topic"); it != record.end() && !it->is_null()) {
    subject.topic_label = it->get<std::string>();
  }
  for (const auto& level : record.at("levels")) {
    subject.explanations.push_back({level.at("level").get<int>(), level.at("text").get<std::string>()});
  }
  std::stable_sort(subject.explanations.begin(), subject.explanations.end(),
                   [](const Explanation& a, const Explanation& b) { return a.level < b.level; });
  return subject;
}

json to_json(const LeveledSubject& subject) {
  json levels = json::array();
  for (const auto& e : subject.explanations) levels.push_back({{"level", e.level}, {"text", e.text}});
  return {{"subject_id", subject.subject_id},
          {"title", subject.title},
          {"topic", subject.topic_label ? json(*subject.topic_label) : json(nullptr)},
          {"levels", std::move(levels)}};
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  for (const auto& s : dataset.subjects) out << to_json(s).dump() << '\n';
}

Dataset parse_dataset(std::istream& in, std::string name, DatasetKind kind) {
  Dataset dataset;
  dataset.name = std::move(name);
  dataset.kind = kind;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      dataset.subjects.push_back(subject_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (dataset.subjects.empty()) throw InvariantError("dataset " + dataset.name + " has no subjects");
  dataset.level_count = static_cast<int>(dataset.subjects.front().explanations.size());

  const auto report = validate_dataset(dataset);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw InvariantError("subject " + v.subject_id + ": " + v.reason);
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind,
                     std::optional<std::string> name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, name ? *name : path.stem().string(), kind);
}

ValidationReport validate_dataset(const Dataset& dataset) {
  ValidationReport report;
  report.subjects_checked = dataset.subjects.size();
  if (dataset.subjects.empty()) report.violations.push_back({"", std::nullopt, "dataset has no subjects"});
  if (dataset.level_count < 1) {
    report.violations.push_back({"", std::nullopt, "level_count must be >= 1"});
  }
  std::set<std::string> ids;
  for (const auto& subject : dataset.subjects) {
    check_subject(subject, dataset.level_count, report.violations);
    if (!ids.insert(subject.subject_id).second) {
      report.violations.push_back({subject.subject_id, std::nullopt, "duplicate subject_id"});
    }
  }
  return report;
}

Dataset sample_per_cell(const Dataset& dataset, std::size_t per_cell, std::uint64_t seed) {
  if (dataset.kind != DatasetKind::math) {
    throw PreconditionError("sample_per_cell requires a math dataset");
  }
  // problem type -> subjects of that type, in file order
  std::vector<std::string> types;
  std::map<std::string, std::vector<const LeveledSubject*>> by_type;
  for (const auto& s : dataset.subjects) {
    auto [it, inserted] = by_type.try_emplace(s.title);
    if (inserted) types.push_back(s.title);
    it->second.push_back(&s);
  }

  Dataset out;
  out.name = dataset.name + "-" + std::to_string(per_cell);
  out.level_count = dataset.level_count;
  out.kind = dataset.kind;

  std::uint64_t cell_index = 0;
  for (const auto& type : types) {
    const auto& pool = by_type.at(type);
    std::vector<LeveledSubject> rows(per_cell);
    for (std::size_t j = 0; j < per_cell; ++j) {
      rows[j].subject_id = type + "/" + std::to_string(j + 1);
      rows[j].title = type;
    }
    for (int level = 1; level <= dataset.level_count; ++level, ++cell_index) {
      if (pool.size() < per_cell) {
        throw InsufficientCell("cell (" + type + ", level " + std::to_string(level) + ") has " +
                               std::to_string(pool.size()) + " items, need " +
                               std::to_string(per_cell));
      }
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(derive_seed(seed, cell_index));
      // partial Fisher-Yates: first per_cell slots become the sample
      for (std::size_t i = 0; i < per_cell; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_cell));
      std::sort(chosen.begin(), chosen.end());
      for (std::size_t j = 0; j < per_cell; ++j) {
        const auto* source = pool[chosen[j]];
        rows[j].explanations.push_back(source->at_level(level));
        if (!rows[j].topic_label) rows[j].topic_label = source->topic_label;
      }
    }
    for (auto& r : rows) out.subjects.push_back(std::move(r));
  }
  return out;
}

bool is_permutation_of_levels(const Permutation& p, int level_count) {
  if (static_cast<int>(p.size()) != level_count) return false;
  std::vector<bool> seen(static_cast<std::size_t>(level_count) + 1, false);
  for (int v : p) {
    if (v < 1 || v > level_count || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

std::vector<Permutation> level_orderings(int level_count, std::size_t count, std::uint64_t seed,
                                         bool distinct) {
  if (level_count < 1) throw PreconditionError("level_count must be >= 1");
  if (count < 1) throw PreconditionError("need at least one ordering");
  if (distinct) {
    std::size_t factorial = 1;
    for (int i = 2; i <= level_count && factorial < count; ++i) factorial *= static_cast<std::size_t>(i);
    if (count > factorial) {
      throw TooManyDistinct(std::to_string(count) + " distinct orderings requested but " +
                            std::to_string(level_count) + "! = " + std::to_string(factorial));
    }
  }
  Rng rng(seed);
  std::vector<Permutation> out;
  std::set<Permutation> seen;
  while (out.size() < count) {
    Permutation p(static_cast<std::size_t>(level_count));
    std::iota(p.begin(), p.end(), 1);
    rng.shuffle(std::span<int>(p));
    if (distinct && !seen.insert(p).second) continue;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace teachaudit::corpus
