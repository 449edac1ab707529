#include "teachaudit/readability.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include "teachaudit/errors.hpp"

namespace teachaudit::readability {

namespace {

// Tokens ending in '.' that do not close a sentence. Compared lowercase,
// including the trailing period.
constexpr std::array<std::string_view, 6> kAbbreviations = {"mr.", "mrs.", "dr.", "e.g.", "i.e.", "etc."};

bool is_ascii_alpha(unsigned char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }
bool is_ascii_alnum(unsigned char c) { return is_ascii_alpha(c) || (c >= '0' && c <= '9'); }
// Non-ASCII bytes (UTF-8 continuation or lead) stay inside words.
bool is_word_core(unsigned char c) { return is_ascii_alnum(c) || c >= 0x80; }
bool is_word_char(unsigned char c) { return is_word_core(c) || c == '\'' || c == '-'; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_vowel(char c) {
  switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'y':
      return true;
    default:
      return false;
  }
}

// The whitespace-delimited token ending just before `end`, lowercased.
std::string token_before(std::string_view text, std::size_t end) {
  std::size_t begin = end;
  while (begin > 0 && !is_space(static_cast<unsigned char>(text[begin - 1]))) --begin;
  std::string tok(text.substr(begin, end - begin));
  // strip opening punctuation such as quotes or parentheses
  const auto first = tok.find_first_not_of("\"'([{");
  tok = first == std::string::npos ? std::string() : tok.substr(first);
  std::transform(tok.begin(), tok.end(), tok.begin(), [](unsigned char c) { return std::tolower(c); });
  return tok;
}

void require_words_and_sentences(const TextStats& s) {
  if (s.words == 0) throw DegenerateText("text has no words");
  if (s.sentences == 0) throw DegenerateText("text has no sentences");
}

}  // namespace

std::size_t count_syllables(std::string_view word) {
  std::string w;
  for (unsigned char c : word) {
    if (is_ascii_alpha(c)) w.push_back(static_cast<char>(std::tolower(c)));
    else w.push_back(' ');  // non-letters break vowel groups
  }
  std::size_t groups = 0;
  bool in_group = false;
  for (char c : w) {
    const bool v = is_vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  const auto last = w.find_last_not_of(' ');
  if (last != std::string::npos && w[last] == 'e' && groups > 1) {
    const char prev = last >= 1 ? w[last - 1] : ' ';
    const char prev2 = last >= 2 ? w[last - 2] : ' ';
    const bool consonant_le = prev == 'l' && prev2 != ' ' && !is_vowel(prev2);
    const bool after_vowel = is_vowel(prev);
    if (!consonant_le && !after_vowel) --groups;
  }
  return std::max<std::size_t>(groups, 1);
}

TextStats analyze(std::string_view text) {
  TextStats s;
  const std::size_t n = text.size();
  bool words_since_boundary = false;

  std::size_t i = 0;
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_char(c)) {
      std::size_t j = i;
      bool has_core = false;
      while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) {
        has_core = has_core || is_word_core(static_cast<unsigned char>(text[j]));
        ++j;
      }
      if (has_core) {
        const auto word = text.substr(i, j - i);
        ++s.words;
        const auto syl = count_syllables(word);
        s.syllables += syl;
        if (syl >= 3) ++s.complex_words;
        for (unsigned char ch : word) s.letters += is_ascii_alpha(ch) ? 1 : 0;
        words_since_boundary = true;
      }
      i = j;
      continue;
    }
    if (is_terminal(text[i])) {
      std::size_t j = i;
      while (j < n && is_terminal(text[j])) ++j;
      // closing quotes/brackets may sit between the terminator and whitespace
      std::size_t k = j;
      while (k < n && (text[k] == '"' || text[k] == '\'' || text[k] == ')' || text[k] == ']')) ++k;
      const bool at_boundary = k == n || is_space(static_cast<unsigned char>(text[k]));
      if (at_boundary && words_since_boundary) {
        bool abbreviation = false;
        if (text[i] == '.' && j == i + 1) {
          const auto tok = token_before(text, j);
          abbreviation = std::find(kAbbreviations.begin(), kAbbreviations.end(), tok) != kAbbreviations.end();
        }
        if (!abbreviation) {
          ++s.sentences;
          words_since_boundary = false;
        }
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (words_since_boundary) ++s.sentences;  // trailing fragment without terminator
  return s;
}

double fkgl(const TextStats& s) {
  require_words_and_sentences(s);
  const double w = static_cast<double>(s.words);
  return 0.39 * (w / static_cast<double>(s.sentences)) + 11.8 * (static_cast<double>(s.syllables) / w) - 15.59;
}

double fog(const TextStats& s) {
  require_words_and_sentences(s);
  const double w = static_cast<double>(s.words);
  return 0.4 * ((w / static_cast<double>(s.sentences)) + 100.0 * (static_cast<double>(s.complex_words) / w));
}

double coleman_liau(const TextStats& s) {
  if (s.words == 0) throw DegenerateText("text has no words");
  const double w = static_cast<double>(s.words);
  return 0.0588 * (100.0 * static_cast<double>(s.letters) / w) -
         0.296 * (100.0 * static_cast<double>(s.sentences) / w) - 15.8;
}

Grades grade(const TextStats& s) {
  Grades g;
  g.fkgl = fkgl(s);
  g.fog = fog(s);
  g.coleman_liau = coleman_liau(s);
  const double mean = (g.fkgl + g.fog + g.coleman_liau) / 3.0;
  g.tgl = std::clamp(mean, 0.0, std::nextafter(kMaxGrade, 0.0));
  return g;
}

Grades grade(std::string_view text) { return grade(analyze(text)); }

double tgl(const TextStats& s) { return grade(s).tgl; }
double tgl(std::string_view text) { return grade(text).tgl; }

}  // namespace teachaudit::readability
