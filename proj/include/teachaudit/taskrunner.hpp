#pragma once

// Ranking and generation protocols: trial enumeration, model dispatch,
// choice parsing, refusal accounting, adjudication and raw-result files.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "teachaudit/cohort.hpp"
#include "teachaudit/corpus.hpp"
#include "teachaudit/modelgate.hpp"
#include "teachaudit/promptkit.hpp"
#include "teachaudit/readability.hpp"

namespace teachaudit::runner {

enum class OutcomeKind { chosen, full_refusal, unparseable };

std::string_view to_string(OutcomeKind kind);

struct ChoiceOutcome {
  OutcomeKind kind = OutcomeKind::unparseable;
  std::optional<int> level;  // set iff kind == chosen
  bool partial_refusal = false;
  bool human_adjudicated = false;
  std::string raw_text;
};

struct TrialSpec {
  std::string dataset;
  std::string subject_id;
  std::string characteristic_id;
  prompt::Role role = prompt::Role::teacher;
  int ordering_index = 0;
  corpus::Permutation permutation;
  std::string request_hash;  // hex SHA-256
};

struct TrialRecord {
  TrialSpec spec;
  ChoiceOutcome outcome;
  std::string error;  // gateway failure, empty on success
};

struct RunMetadata {
  std::string task;  // "ranking" or "generation"
  std::string model_id;
  std::string dataset;
  std::string role;
  int level_count = 0;
  std::size_t n_orderings = 0;
  bool distinct_orderings = false;
  std::uint64_t seed = 0;
  std::string generator_id;
  std::string cohort_version;
  std::string templates_digest;
  std::string choice_layout;
  double temperature = 0;
  std::vector<std::string> refusal_markers;

  nlohmann::json to_json() const;
  static RunMetadata from_json(const nlohmann::json& j);
};

struct RefusalStats {
  std::size_t trials = 0;
  std::size_t chosen = 0;
  std::size_t full_refusals = 0;
  std::size_t partial_refusals = 0;
  std::size_t unparseable = 0;

  double full_refusal_rate() const {
    return trials == 0 ? 0.0 : static_cast<double>(full_refusals) / static_cast<double>(trials);
  }
};

struct RankingResults {
  RunMetadata metadata;
  std::vector<TrialRecord> records;
};

struct GenerationRecord {
  std::string topic;
  std::string characteristic_id;
  std::string request_hash;
  std::string text;
  std::optional<readability::Grades> grade;  // empty when the text has no words
  bool non_english_flag = false;
  std::string error;
};

struct GenerationResults {
  RunMetadata metadata;
  std::vector<GenerationRecord> records;
};

using RunResults = std::variant<RankingResults, GenerationResults>;

const std::vector<std::string>& default_refusal_markers();
std::vector<std::string> load_refusal_markers(const std::filesystem::path& path);

/// First standalone choice letter in A..(A+L-1), mapped through the
/// presentation. Uppercase letters count anywhere except a sentence-initial
/// "A"/"I" followed by a lowercase word (article or pronoun); lowercase
/// letters count only as the whole reply or after a "choice"/"answer"/
/// "option" prefix. Refusal markers are case-insensitive substrings.
ChoiceOutcome parse_choice(std::string_view text, int level_count, const prompt::RankingPresentation& presentation,
                           std::span<const std::string> refusal_markers);

struct RankingOptions {
  prompt::Role role = prompt::Role::teacher;
  std::size_t n_orderings = 1;
  bool distinct_orderings = false;
  std::uint64_t seed = 0;
  std::vector<std::string> refusal_markers = default_refusal_markers();
  prompt::TemplateSet templates = prompt::TemplateSet::defaults();
  /// Previous output; records whose request hash is cached are reused.
  const RankingResults* resume = nullptr;
};

/// Trials in (subject, ordering, characteristic) order. Each subject gets its
/// own orderings drawn from a substream of `seed`.
RankingResults run_ranking(const corpus::Dataset& dataset, const cohort::Cohort& cohort, gate::Gateway& gateway,
                           const RankingOptions& options);

struct GenerationOptions {
  std::string task_name = "generation";
  prompt::TemplateSet templates = prompt::TemplateSet::defaults();
};

GenerationResults run_generation(const std::vector<std::string>& topics, const cohort::Cohort& cohort,
                                 gate::Gateway& gateway, const GenerationOptions& options = {});

/// Fewer than 5% English stopwords among >= 20 words.
bool looks_non_english(std::string_view text);

/// Resolves unparseable outcomes from a JSONL file of
/// {"request_hash": hex, "level": int | "full_refusal"}.
RankingResults adjudicate(RankingResults results, const std::filesystem::path& adjudication_file);
RankingResults adjudicate(RankingResults results, std::istream& adjudications);

std::map<std::string, RefusalStats> refusal_stats(const RankingResults& results);

void write_results(const RankingResults& results, std::ostream& out);
void write_results(const GenerationResults& results, std::ostream& out);
void write_results_file(const RunResults& results, const std::filesystem::path& path);
RunResults read_results(std::istream& in);
RunResults read_results_file(const std::filesystem::path& path);

}  // namespace teachaudit::runner
