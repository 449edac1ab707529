#pragma once

// Leveled-explanation datasets: loading, validation, MATH-style per-cell
// subsampling and random level orderings.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace teachaudit::corpus {

enum class DatasetKind { text, math };

struct Explanation {
  int level = 0;  // 1 = simplest
  std::string text;
};

struct LeveledSubject {
  std::string subject_id;
  std::string title;
  std::vector<Explanation> explanations;  // sorted by level after loading
  std::optional<std::string> topic_label;

  /// Explanation with the given 1-based level. Throws std::out_of_range.
  const Explanation& at_level(int level) const;
};

struct Dataset {
  std::string name;
  int level_count = 0;
  std::vector<LeveledSubject> subjects;
  DatasetKind kind = DatasetKind::text;
};

struct Violation {
  std::string subject_id;  // empty for dataset-wide problems
  std::optional<int> level;
  std::string reason;
};

struct ValidationReport {
  std::size_t subjects_checked = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

/// One level ordering: entry i is the true level shown at display position i.
using Permutation = std::vector<int>;

/// Reads a JSON Lines dataset. Blank lines are skipped. The dataset name
/// defaults to the file stem.
Dataset load_dataset(const std::filesystem::path& path,
                     DatasetKind kind = DatasetKind::text,
                     std::optional<std::string> name = std::nullopt);
Dataset parse_dataset(std::istream& in, std::string name, DatasetKind kind);

ValidationReport validate_dataset(const Dataset& dataset);

/// For math datasets: cells are (subject title = problem type, level). Draws
/// `per_cell` items from each cell without replacement and regroups them into
/// `per_cell` subjects per problem type.
Dataset sample_per_cell(const Dataset& dataset, std::size_t per_cell, std::uint64_t seed);

/// `count` uniformly random permutations of 1..level_count.
std::vector<Permutation> level_orderings(int level_count, std::size_t count, std::uint64_t seed,
                                         bool distinct = false);

bool is_permutation_of_levels(const Permutation& p, int level_count);

nlohmann::json to_json(const LeveledSubject& subject);
LeveledSubject subject_from_json(const nlohmann::json& record);
void write_dataset(const Dataset& dataset, std::ostream& out);

}  // namespace teachaudit::corpus
