#include "teachaudit/taskrunner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "teachaudit/digest.hpp"
#include "teachaudit/errors.hpp"
#include "teachaudit/parallel.hpp"
#include "teachaudit/rng.hpp"

namespace teachaudit::runner {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Text before `pos`, lowercased, without trailing spaces and markup.
std::string lead_in(std::string_view text, std::size_t pos) {
  std::string before = lower(text.substr(0, pos));
  while (!before.empty() && (std::isspace(static_cast<unsigned char>(before.back())) ||
                             before.back() == '*' || before.back() == '"' || before.back() == '(' ||
                             before.back() == '[' || before.back() == '_' || before.back() == '`')) {
    before.pop_back();
  }
  return before;
}

bool has_choice_prefix(std::string_view text, std::size_t pos) {
  const auto before = lead_in(text, pos);
  for (std::string_view p : {"choice:", "answer:", "choice", "answer", "option", "choice is", "answer is",
                             "option:"}) {
    if (ends_with(before, p)) {
      // prefix must start a word
      const auto start = before.size() - p.size();
      if (start == 0 || !word_char(before[start - 1])) return true;
    }
  }
  return false;
}

bool sentence_initial(std::string_view text, std::size_t pos) {
  std::size_t i = pos;
  while (i > 0 && (text[i - 1] == ' ' || text[i - 1] == '\t' || text[i - 1] == '*' || text[i - 1] == '"' ||
                   text[i - 1] == '(' || text[i - 1] == '[' || text[i - 1] == '_' || text[i - 1] == '`')) {
    --i;
  }
  if (i == 0) return true;
  const char prev = text[i - 1];
  return prev == '.' || prev == '!' || prev == '?' || prev == '\n' || prev == '\r' || prev == ':';
}

// Letter followed by whitespace and then a lowercase word, as in "A good ..."
bool followed_by_lowercase_word(std::string_view text, std::size_t pos) {
  std::size_t j = pos + 1;
  if (j >= text.size() || text[j] != ' ') return false;
  while (j < text.size() && text[j] == ' ') ++j;
  return j < text.size() && std::islower(static_cast<unsigned char>(text[j]));
}

bool only_token(std::string_view text, std::size_t pos) {
  auto junk = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || std::ispunct(static_cast<unsigned char>(c));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i != pos && !junk(text[i])) return false;
  }
  return true;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kWords = {
      "a",     "about", "after", "all",   "also",  "an",    "and",   "any",   "are",   "as",    "at",
      "be",    "been",  "but",   "by",    "can",   "could", "do",    "does",  "each",  "for",   "from",
      "had",   "has",   "have",  "he",    "her",   "his",   "how",   "i",     "if",    "in",    "into",
      "is",    "it",    "its",   "just",  "like",  "more",  "most",  "my",    "no",    "not",   "of",
      "on",    "one",   "only",  "or",    "other", "our",   "out",   "she",   "so",    "some",  "such",
      "than",  "that",  "the",   "their", "them",  "then",  "there", "these", "they",  "this",  "those",
      "to",    "up",    "us",    "very",  "was",   "we",    "were",  "what",  "when",  "where", "which",
      "while", "who",   "why",   "will",  "with",  "would", "you",   "your"};
  return kWords;
}

json outcome_level_json(const ChoiceOutcome& o) { return o.level ? json(*o.level) : json(nullptr); }

json trial_to_json(const TrialRecord& r) {
  return {{"record", "trial"},
          {"dataset", r.spec.dataset},
          {"subject_id", r.spec.subject_id},
          {"characteristic", r.spec.characteristic_id},
          {"role", prompt::to_string(r.spec.role)},
          {"ordering_index", r.spec.ordering_index},
          {"permutation", r.spec.permutation},
          {"request_hash", r.spec.request_hash},
          {"outcome", to_string(r.outcome.kind)},
          {"level", outcome_level_json(r.outcome)},
          {"partial_refusal", r.outcome.partial_refusal},
          {"human_adjudicated", r.outcome.human_adjudicated},
          {"raw_text", r.outcome.raw_text},
          {"raw_text_sha256", sha256_hex(r.outcome.raw_text)},
          {"error", r.error.empty() ? json(nullptr) : json(r.error)}};
}

OutcomeKind outcome_from_string(const std::string& s) {
  if (s == "chosen") return OutcomeKind::chosen;
  if (s == "full_refusal") return OutcomeKind::full_refusal;
  if (s == "unparseable") return OutcomeKind::unparseable;
  throw ParseError("unknown outcome kind " + s);
}

TrialRecord trial_from_json(const json& j) {
  TrialRecord r;
  r.spec.dataset = j.at("dataset").get<std::string>();
  r.spec.subject_id = j.at("subject_id").get<std::string>();
  r.spec.characteristic_id = j.at("characteristic").get<std::string>();
  r.spec.role = prompt::role_from_string(j.at("role").get<std::string>());
  r.spec.ordering_index = j.at("ordering_index").get<int>();
  r.spec.permutation = j.at("permutation").get<corpus::Permutation>();
  r.spec.request_hash = j.at("request_hash").get<std::string>();
  r.outcome.kind = outcome_from_string(j.at("outcome").get<std::string>());
  if (!j.at("level").is_null()) r.outcome.level = j.at("level").get<int>();
  r.outcome.partial_refusal = j.value("partial_refusal", false);
  r.outcome.human_adjudicated = j.value("human_adjudicated", false);
  r.outcome.raw_text = j.value("raw_text", std::string());
  if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  if ((r.outcome.kind == OutcomeKind::chosen) != r.outcome.level.has_value()) {
    throw ParseError("trial " + r.spec.request_hash + ": level must be present iff outcome is chosen");
  }
  return r;
}

json grades_json(const std::optional<readability::Grades>& g) {
  if (!g) return nullptr;
  return {{"fkgl", g->fkgl}, {"fog", g->fog}, {"coleman_liau", g->coleman_liau}, {"tgl", g->tgl}};
}

json generation_to_json(const GenerationRecord& r) {
  return {{"record", "generation"},
          {"topic", r.topic},
          {"characteristic", r.characteristic_id},
          {"request_hash", r.request_hash},
          {"text", r.text},
          {"text_sha256", sha256_hex(r.text)},
          {"grade", grades_json(r.grade)},
          {"non_english", r.non_english_flag},
          {"error", r.error.empty() ? json(nullptr) : json(r.error)}};
}

GenerationRecord generation_from_json(const json& j) {
  GenerationRecord r;
  r.topic = j.at("topic").get<std::string>();
  r.characteristic_id = j.at("characteristic").get<std::string>();
  r.request_hash = j.at("request_hash").get<std::string>();
  r.text = j.at("text").get<std::string>();
  if (!j.at("grade").is_null()) {
    const auto& g = j.at("grade");
    r.grade = readability::Grades{g.at("fkgl").get<double>(), g.at("fog").get<double>(),
                                  g.at("coleman_liau").get<double>(), g.at("tgl").get<double>()};
  }
  r.non_english_flag = j.value("non_english", false);
  if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  return r;
}

}  // namespace

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::chosen:
      return "chosen";
    case OutcomeKind::full_refusal:
      return "full_refusal";
    case OutcomeKind::unparseable:
      return "unparseable";
  }
  return "unparseable";
}

json RunMetadata::to_json() const {
  return {{"task", task},
          {"model_id", model_id},
          {"dataset", dataset},
          {"role", role},
          {"level_count", level_count},
          {"n_orderings", n_orderings},
          {"distinct_orderings", distinct_orderings},
          {"seed", seed},
          {"generator_id", generator_id},
          {"cohort_version", cohort_version},
          {"templates_digest", templates_digest},
          {"choice_layout", choice_layout},
          {"temperature", temperature},
          {"refusal_markers", refusal_markers}};
}

RunMetadata RunMetadata::from_json(const json& j) {
  RunMetadata m;
  m.task = j.at("task").get<std::string>();
  m.model_id = j.at("model_id").get<std::string>();
  m.dataset = j.at("dataset").get<std::string>();
  m.role = j.value("role", std::string("teacher"));
  m.level_count = j.value("level_count", 0);
  m.n_orderings = j.value("n_orderings", std::size_t{0});
  m.distinct_orderings = j.value("distinct_orderings", false);
  m.seed = j.value("seed", std::uint64_t{0});
  m.generator_id = j.value("generator_id", std::string());
  m.cohort_version = j.value("cohort_version", std::string());
  m.templates_digest = j.value("templates_digest", std::string());
  m.choice_layout = j.value("choice_layout", std::string());
  m.temperature = j.value("temperature", 0.0);
  m.refusal_markers = j.value("refusal_markers", std::vector<std::string>{});
  return m;
}

const std::vector<std::string>& default_refusal_markers() {
  static const std::vector<std::string> kMarkers = {"I cannot",          "I can't",
                                                    "I won't",           "it would be wrong",
                                                    "it would be inappropriate", "I'm not able to"};
  return kMarkers;
}

std::vector<std::string> load_refusal_markers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open refusal marker file " + path.string());
  std::vector<std::string> markers;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') markers.push_back(line);
  }
  return markers;
}

ChoiceOutcome parse_choice(std::string_view text, int level_count, const prompt::RankingPresentation& presentation,
                           std::span<const std::string> refusal_markers) {
  if (level_count < 1) throw PreconditionError("parse_choice needs L >= 1");
  ChoiceOutcome out;
  out.raw_text = std::string(text);

  const auto lowered = lower(text);
  const bool refused = std::any_of(refusal_markers.begin(), refusal_markers.end(), [&](const std::string& m) {
    return !m.empty() && lowered.find(lower(m)) != std::string::npos;
  });

  std::optional<char> letter;
  for (std::size_t i = 0; i < text.size() && !letter; ++i) {
    const char c = text[i];
    if (!std::isalpha(static_cast<unsigned char>(c))) continue;
    if (i > 0 && word_char(text[i - 1])) continue;
    if (i + 1 < text.size() && word_char(text[i + 1])) continue;
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper - 'A' >= level_count) continue;

    const bool prefixed = has_choice_prefix(text, i);
    if (std::islower(static_cast<unsigned char>(c))) {
      if (prefixed || only_token(text, i)) letter = upper;
      continue;
    }
    if ((c == 'A' || c == 'I') && !prefixed && sentence_initial(text, i) && followed_by_lowercase_word(text, i)) {
      continue;
    }
    letter = upper;
  }

  if (letter) {
    out.level = presentation.to_level(*letter);
    if (out.level) {
      out.kind = OutcomeKind::chosen;
      out.partial_refusal = refused;
      return out;
    }
  }
  out.kind = refused ? OutcomeKind::full_refusal : OutcomeKind::unparseable;
  return out;
}

bool looks_non_english(std::string_view text) {
  std::size_t words = 0, hits = 0;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    ++words;
    hits += stopwords().count(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isalpha(c) || c == '\'' || c >= 0x80) current.push_back(static_cast<char>(std::tolower(c)));
    else flush();
  }
  flush();
  if (words < 20) return false;
  return static_cast<double>(hits) / static_cast<double>(words) < 0.05;
}

RankingResults run_ranking(const corpus::Dataset& dataset, const cohort::Cohort& cohort, gate::Gateway& gateway,
                           const RankingOptions& options) {
  if (options.n_orderings < 1) throw PreconditionError("n_orderings must be >= 1");
  const auto report = corpus::validate_dataset(dataset);
  if (!report.ok()) throw InvariantError("dataset " + dataset.name + ": " + report.violations.front().reason);

  RankingResults results;
  auto& meta = results.metadata;
  meta.task = "ranking";
  meta.model_id = gateway.config().model_id;
  meta.dataset = dataset.name;
  meta.role = std::string(prompt::to_string(options.role));
  meta.level_count = dataset.level_count;
  meta.n_orderings = options.n_orderings;
  meta.distinct_orderings = options.distinct_orderings;
  meta.seed = options.seed;
  meta.generator_id = std::string(kGeneratorId);
  meta.cohort_version = cohort.version();
  meta.templates_digest = options.templates.digest();
  meta.choice_layout = std::string(prompt::kChoiceLayout);
  meta.temperature = gateway.config().temperature;
  meta.refusal_markers = options.refusal_markers;

  struct Job {
    TrialSpec spec;
    gate::ModelRequest request;
  };
  std::vector<Job> jobs;
  jobs.reserve(dataset.subjects.size() * options.n_orderings * cohort.characteristics().size());
  for (std::size_t si = 0; si < dataset.subjects.size(); ++si) {
    const auto& subject = dataset.subjects[si];
    const auto orderings = corpus::level_orderings(dataset.level_count, options.n_orderings,
                                                   derive_seed(options.seed, si), options.distinct_orderings);
    for (std::size_t oi = 0; oi < orderings.size(); ++oi) {
      for (const auto& ch : cohort.characteristics()) {
        const auto candidate = cohort::render_candidate(ch);
        auto [pair, presentation] =
            prompt::build_ranking_prompt(options.role, candidate, subject, orderings[oi], options.templates);
        Job job;
        job.spec = {dataset.name, subject.subject_id, ch.id, options.role, static_cast<int>(oi), orderings[oi],
                    gate::request_hash(gateway.config(), pair).hex()};
        job.request = {std::move(pair), candidate, std::move(presentation)};
        jobs.push_back(std::move(job));
      }
    }
  }

  std::map<std::string, const TrialRecord*> previous;
  if (options.resume) {
    for (const auto& r : options.resume->records) {
      if (r.error.empty()) previous.emplace(r.spec.request_hash, &r);
    }
  }
  const auto* cache = gateway.cache();

  results.records.resize(jobs.size());
  parallel_for(jobs.size(), gateway.config().concurrency, [&](std::size_t i) {
    auto& job = jobs[i];
    auto& record = results.records[i];
    record.spec = job.spec;
    if (auto it = previous.find(job.spec.request_hash);
        it != previous.end() && cache && cache->contains(Digest::from_hex(job.spec.request_hash))) {
      record.outcome = it->second->outcome;
      return;
    }
    try {
      const auto response = gateway.complete(job.request);
      record.outcome = parse_choice(response.text, dataset.level_count, *job.request.presentation,
                                    options.refusal_markers);
    } catch (const Error& e) {
      record.outcome = ChoiceOutcome{};
      record.error = e.what();
    }
  });
  return results;
}

GenerationResults run_generation(const std::vector<std::string>& topics, const cohort::Cohort& cohort,
                                 gate::Gateway& gateway, const GenerationOptions& options) {
  if (topics.empty()) throw PreconditionError("run_generation needs at least one topic");
  GenerationResults results;
  auto& meta = results.metadata;
  meta.task = "generation";
  meta.model_id = gateway.config().model_id;
  meta.dataset = options.task_name;
  meta.role = "teacher";
  meta.generator_id = std::string(kGeneratorId);
  meta.cohort_version = cohort.version();
  meta.templates_digest = options.templates.digest();
  meta.temperature = gateway.config().temperature;

  std::vector<gate::ModelRequest> requests;
  for (const auto& topic : topics) {
    for (const auto& ch : cohort.characteristics()) {
      const auto candidate = cohort::render_candidate(ch);
      requests.push_back({prompt::build_generation_prompt(candidate, topic, options.templates), candidate,
                          std::nullopt});
      GenerationRecord rec;
      rec.topic = topic;
      rec.characteristic_id = ch.id;
      rec.request_hash = gate::request_hash(gateway.config(), requests.back().prompt).hex();
      results.records.push_back(std::move(rec));
    }
  }

  parallel_for(requests.size(), gateway.config().concurrency, [&](std::size_t i) {
    auto& rec = results.records[i];
    try {
      rec.text = gateway.complete(requests[i]).text;
    } catch (const Error& e) {
      rec.error = e.what();
      return;
    }
    try {
      rec.grade = readability::grade(rec.text);
    } catch (const DegenerateText&) {
      rec.grade.reset();
    }
    rec.non_english_flag = looks_non_english(rec.text);
  });
  return results;
}

RankingResults adjudicate(RankingResults results, std::istream& adjudications) {
  std::map<std::string, std::vector<TrialRecord*>> by_hash;
  for (auto& r : results.records) by_hash[r.spec.request_hash].push_back(&r);
  const int L = results.metadata.level_count;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(adjudications, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("adjudication line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto hash = j.value("request_hash", std::string());
    auto it = by_hash.find(hash);
    if (it == by_hash.end()) throw UnknownHash("adjudication references unknown request_hash " + hash);
    ChoiceOutcome resolved;
    resolved.human_adjudicated = true;
    const auto& level = j.at("level");
    if (level.is_string() && level.get<std::string>() == "full_refusal") {
      resolved.kind = OutcomeKind::full_refusal;
    } else if (level.is_number_integer()) {
      const int v = level.get<int>();
      if (v < 1 || v > L) {
        throw LevelOutOfRange("level " + std::to_string(v) + " outside 1.." + std::to_string(L) + " for " + hash);
      }
      resolved.kind = OutcomeKind::chosen;
      resolved.level = v;
    } else {
      throw ParseError("adjudication line " + std::to_string(line_no) + ": level must be an integer or \"full_refusal\"");
    }
    for (auto* record : it->second) {
      if (record->outcome.kind != OutcomeKind::unparseable) continue;
      resolved.raw_text = record->outcome.raw_text;
      record->outcome = resolved;
      record->error.clear();
    }
  }
  return results;
}

RankingResults adjudicate(RankingResults results, const std::filesystem::path& adjudication_file) {
  std::ifstream in(adjudication_file);
  if (!in) throw IoError("cannot open adjudication file " + adjudication_file.string());
  return adjudicate(std::move(results), in);
}

std::map<std::string, RefusalStats> refusal_stats(const RankingResults& results) {
  std::map<std::string, RefusalStats> out;
  for (const auto& r : results.records) {
    auto& s = out[r.spec.characteristic_id];
    ++s.trials;
    switch (r.outcome.kind) {
      case OutcomeKind::chosen:
        ++s.chosen;
        if (r.outcome.partial_refusal) ++s.partial_refusals;
        break;
      case OutcomeKind::full_refusal:
        ++s.full_refusals;
        break;
      case OutcomeKind::unparseable:
        ++s.unparseable;
        break;
    }
  }
  return out;
}

void write_results(const RankingResults& results, std::ostream& out) {
  json header = {{"record", "metadata"}, {"metadata", results.metadata.to_json()}};
  json stats = json::object();
  for (const auto& [id, s] : refusal_stats(results)) {
    stats[id] = {{"trials", s.trials},
                 {"chosen", s.chosen},
                 {"full_refusals", s.full_refusals},
                 {"partial_refusals", s.partial_refusals},
                 {"unparseable", s.unparseable},
                 {"full_refusal_rate", s.full_refusal_rate()}};
  }
  header["refusal_stats"] = std::move(stats);
  out << header.dump() << '\n';
  for (const auto& r : results.records) out << trial_to_json(r).dump() << '\n';
}

void write_results(const GenerationResults& results, std::ostream& out) {
  json header = {{"record", "metadata"}, {"metadata", results.metadata.to_json()}};
  out << header.dump() << '\n';
  for (const auto& r : results.records) out << generation_to_json(r).dump() << '\n';
}

void write_results_file(const RunResults& results, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write results file " + path.string());
  std::visit([&](const auto& r) { write_results(r, out); }, results);
  if (!out) throw IoError("failed writing results file " + path.string());
}

RunResults read_results(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<RunMetadata> meta;
  RankingResults ranking;
  GenerationResults generation;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = json::parse(line);
      const auto kind = j.at("record").get<std::string>();
      if (kind == "metadata") {
        meta = RunMetadata::from_json(j.at("metadata"));
      } else if (kind == "trial") {
        ranking.records.push_back(trial_from_json(j));
      } else if (kind == "generation") {
        generation.records.push_back(generation_from_json(j));
      } else {
        throw ParseError("unknown record type " + kind);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("results line " + std::to_string(line_no) + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("results line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!meta) throw ParseError("results file has no metadata record");
  if (meta->task == "generation") {
    generation.metadata = *meta;
    return generation;
  }
  ranking.metadata = *meta;
  return ranking;
}

RunResults read_results_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results file " + path.string());
  return read_results(in);
}

}  // namespace teachaudit::runner
