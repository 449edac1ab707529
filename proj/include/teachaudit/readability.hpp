#pragma once

// English readability: Flesch-Kincaid grade, Gunning Fog, Coleman-Liau and
// their clamped mean (total grade level).

#include <cstddef>
#include <string_view>

namespace teachaudit::readability {

struct TextStats {
  std::size_t sentences = 0;
  std::size_t words = 0;
  std::size_t syllables = 0;
  std::size_t letters = 0;        // ASCII A-Z / a-z only
  std::size_t complex_words = 0;  // words with >= 3 syllables

  bool operator==(const TextStats&) const = default;
};

/// Upper bound (exclusive) of the total grade level scale.
inline constexpr double kMaxGrade = 25.0;

TextStats analyze(std::string_view text);

/// Vowel-group heuristic: count runs of [aeiouy], drop a terminal silent
/// "e" (kept for consonant + "le" and after another vowel), floor at 1.
std::size_t count_syllables(std::string_view word);

double fkgl(const TextStats& s);
double fog(const TextStats& s);
double coleman_liau(const TextStats& s);

/// Mean of the three indices, clamped to [0, 25).
double tgl(const TextStats& s);
double tgl(std::string_view text);

struct Grades {
  double fkgl = 0;
  double fog = 0;
  double coleman_liau = 0;
  double tgl = 0;
};

/// All four grades from one pass over the text. Throws DegenerateText.
Grades grade(std::string_view text);
Grades grade(const TextStats& s);

}  // namespace teachaudit::readability
