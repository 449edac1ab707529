#pragma once

// Prompt construction for the ranking and generation protocols.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "teachaudit/corpus.hpp"

namespace teachaudit::prompt {

enum class Role { teacher, student };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct PromptPair {
  std::string system;
  std::string user;

  bool operator==(const PromptPair&) const = default;
};

/// How one ranking prompt displayed the explanations: position i carries
/// letter 'A' + i and shows true level permutation()[i].
class RankingPresentation {
 public:
  RankingPresentation() = default;
  /// Throws BadOrdering unless `permutation` is a bijection on 1..L, L <= 26.
  explicit RankingPresentation(corpus::Permutation permutation, std::string choice_block = {});

  int level_count() const { return static_cast<int>(permutation_.size()); }
  const corpus::Permutation& permutation() const { return permutation_; }
  const std::string& choice_block() const { return choice_block_; }
  std::vector<char> letters() const;

  /// True level shown under `letter` (case-insensitive), if the letter is in range.
  std::optional<int> to_level(char letter) const;
  char letter_for_level(int level) const;

 private:
  corpus::Permutation permutation_;
  std::string choice_block_;
};

/// The six prompt templates. Placeholders: {candidate}, {topic}.
struct TemplateSet {
  std::string ranking_teacher_system;
  std::string ranking_teacher_user;
  std::string ranking_student_system;
  std::string ranking_student_user;
  std::string generation_system;
  std::string generation_user;

  static const TemplateSet& defaults();
  /// Reads `<name>.txt` for each template name present in `dir`; missing
  /// files keep the default text.
  static TemplateSet load_dir(const std::filesystem::path& dir);

  /// Hex SHA-256 over all six templates, for run metadata.
  std::string digest() const;

  static constexpr std::string_view kNames[] = {
      "ranking_teacher_system", "ranking_teacher_user", "ranking_student_system",
      "ranking_student_user",   "generation_system",    "generation_user"};
};

/// Layout used for the lettered choices; recorded in run metadata.
inline constexpr std::string_view kChoiceLayout = "letter-dot-space-text/blank-line-separated/v1";

std::string render_choice_block(const corpus::LeveledSubject& subject,
                                std::span<const int> ordering);

std::pair<PromptPair, RankingPresentation> build_ranking_prompt(
    Role role, std::string_view candidate, const corpus::LeveledSubject& subject,
    std::span<const int> ordering, const TemplateSet& templates = TemplateSet::defaults());

/// Generation supports the teacher role only.
PromptPair build_generation_prompt(std::string_view candidate, std::string_view topic,
                                   const TemplateSet& templates = TemplateSet::defaults());

std::string substitute(std::string_view tmpl, std::string_view placeholder, std::string_view value);

}  // namespace teachaudit::prompt
