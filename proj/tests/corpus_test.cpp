// Tests for corpus loading, validation, per-cell sampling and level orderings.

#include "teachaudit/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "teachaudit/errors.hpp"
#include "teachaudit/rng.hpp"
#include "test_support.hpp"

namespace teachaudit::corpus {
namespace {

using nlohmann::json;

std::string record(const std::string& id, const std::vector<int>& levels, const std::string& title = "T",
                   const std::string& blank_at = {}) {
  json lv = json::array();
  for (int l : levels) {
    lv.push_back({{"level", l}, {"text", std::to_string(l) == blank_at ? "  " : "text " + std::to_string(l)}});
  }
  return json{{"subject_id", id}, {"title", title}, {"topic", nullptr}, {"levels", lv}}.dump();
}

Dataset parse(const std::string& body, DatasetKind kind = DatasetKind::text) {
  std::istringstream in(body);
  return parse_dataset(in, "inline", kind);
}

// ---------------------------------------------------------------------------
// load / parse
// ---------------------------------------------------------------------------

TEST(CorpusLoad, TwentySixSubjectsFiveLevels) {
  std::string body;
  for (int i = 0; i < 26; ++i) body += record("w" + std::to_string(i), {1, 2, 3, 4, 5}) + "\n";
  const auto d = parse(body);
  EXPECT_EQ(d.level_count, 5);
  EXPECT_EQ(d.subjects.size(), 26u);
  EXPECT_EQ(d.subjects.front().subject_id, "w0");
  EXPECT_EQ(d.subjects.back().subject_id, "w25");
}

TEST(CorpusLoad, EmptyFileIsInvariantError) { EXPECT_THROW(parse(""), InvariantError); }

TEST(CorpusLoad, DuplicateLevelNamed) {
  try {
    parse(record("dup", {1, 2, 2, 4, 5}) + "\n");
    FAIL() << "expected InvariantError";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate level 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
  }
}

TEST(CorpusLoad, MalformedLineReportsLineNumber) {
  try {
    parse(record("a", {1, 2, 3}) + "\n\n{not json\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(CorpusLoad, MissingFieldIsParseError) {
  EXPECT_THROW(parse(R"({"subject_id":"x","levels":[]})"), ParseError);
}

TEST(CorpusLoad, LevelsSortedAndTopicKept) {
  const auto d = parse(R"({"subject_id":"x","title":"X","topic":"science","levels":[)"
                       R"({"level":3,"text":"c"},{"level":1,"text":"a"},{"level":2,"text":"b"}]})");
  ASSERT_EQ(d.subjects.size(), 1u);
  const auto& s = d.subjects[0];
  EXPECT_EQ(s.explanations[0].level, 1);
  EXPECT_EQ(s.explanations[2].text, "c");
  EXPECT_EQ(s.topic_label, "science");
  EXPECT_EQ(s.at_level(2).text, "b");
  EXPECT_THROW(s.at_level(4), std::out_of_range);
}

TEST(CorpusLoad, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/file.jsonl"), IoError);
}

TEST(CorpusLoad, BundledFixtureLoads) {
  const auto d = load_dataset(testing::data_dir() / "fixtures" / "leveled_corpus.jsonl");
  EXPECT_EQ(d.name, "leveled_corpus");
  EXPECT_EQ(d.level_count, 5);
  EXPECT_EQ(d.subjects.size(), 10u);
}

TEST(CorpusLoad, RoundTripThroughWriter) {
  const auto d = testing::synthetic_dataset(4, 3);
  std::ostringstream out;
  write_dataset(d, out);
  const auto back = parse(out.str());
  ASSERT_EQ(back.subjects.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(to_json(back.subjects[i]), to_json(d.subjects[i]));
  }
}

// Property: sorting each subject's levels yields exactly 1..L.
TEST(CorpusLoad, LoadedSubjectsCoverLevelsExactly) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int L = 1 + static_cast<int>(rng.uniform_index(7));
    std::string body;
    const auto n = 1 + rng.uniform_index(6);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::vector<int> levels(static_cast<std::size_t>(L));
      for (int l = 0; l < L; ++l) levels[static_cast<std::size_t>(l)] = l + 1;
      rng.shuffle(std::span<int>(levels));
      body += record("s" + std::to_string(i), levels) + "\n";
    }
    const auto d = parse(body);
    for (const auto& s : d.subjects) {
      ASSERT_EQ(static_cast<int>(s.explanations.size()), L);
      for (int l = 0; l < L; ++l) EXPECT_EQ(s.explanations[static_cast<std::size_t>(l)].level, l + 1);
    }
  }
}

// ---------------------------------------------------------------------------
// validate_dataset
// ---------------------------------------------------------------------------

TEST(CorpusValidate, ValidThreeLevelDataset) {
  const auto report = validate_dataset(testing::synthetic_dataset(5, 3));
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.subjects_checked, 5u);
}

TEST(CorpusValidate, EmptyLevelTwoText) {
  auto d = testing::synthetic_dataset(3, 3);
  d.subjects[1].explanations[1].text = "   ";
  const auto report = validate_dataset(d);
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].subject_id, "s1");
  EXPECT_EQ(report.violations[0].level, 2);
}

TEST(CorpusValidate, MixedLevelCountsOneViolationPerSubject) {
  auto d = testing::synthetic_dataset(4, 5);
  d.subjects[1].explanations.pop_back();
  d.subjects[3].explanations.pop_back();
  const auto report = validate_dataset(d);
  ASSERT_EQ(report.violations.size(), 2u);
  EXPECT_EQ(report.violations[0].subject_id, "s1");
  EXPECT_EQ(report.violations[1].subject_id, "s3");
}

TEST(CorpusValidate, DuplicateIdsAndEmptyDataset) {
  auto d = testing::synthetic_dataset(2, 3);
  d.subjects[1].subject_id = "s0";
  EXPECT_FALSE(validate_dataset(d).ok());
  Dataset empty;
  empty.level_count = 3;
  EXPECT_NO_THROW(validate_dataset(empty));
  EXPECT_FALSE(validate_dataset(empty).ok());
}

// ---------------------------------------------------------------------------
// sample_per_cell
// ---------------------------------------------------------------------------

Dataset math_source(int types, int per_type, int levels) {
  Dataset d;
  d.name = "math";
  d.kind = DatasetKind::math;
  d.level_count = levels;
  for (int t = 0; t < types; ++t) {
    for (int i = 0; i < per_type; ++i) {
      LeveledSubject s;
      s.subject_id = "t" + std::to_string(t) + "-" + std::to_string(i);
      s.title = "type" + std::to_string(t);
      for (int l = 1; l <= levels; ++l) {
        s.explanations.push_back({l, s.subject_id + "@" + std::to_string(l)});
      }
      d.subjects.push_back(std::move(s));
    }
  }
  return d;
}

TEST(CorpusSample, SevenTypesFiftyPerCell) {
  const auto out = sample_per_cell(math_source(7, 60, 5), 50, 3);
  EXPECT_EQ(out.subjects.size(), 7u * 50u);
  std::size_t items = 0;
  for (const auto& s : out.subjects) items += s.explanations.size();
  EXPECT_EQ(items, 1750u);
  EXPECT_EQ(out.name, "math-50");
}

TEST(CorpusSample, EveryCellHasExactlyPerCell) {
  const auto src = math_source(3, 9, 4);
  const auto out = sample_per_cell(src, 4, 77);
  std::map<std::pair<std::string, int>, int> cells;
  for (const auto& s : out.subjects) {
    for (const auto& e : s.explanations) ++cells[{s.title, e.level}];
  }
  EXPECT_EQ(cells.size(), 12u);
  for (const auto& [cell, n] : cells) EXPECT_EQ(n, 4) << cell.first << " level " << cell.second;
  EXPECT_TRUE(validate_dataset(out).ok());
}

TEST(CorpusSample, AllAvailableIsIdentity) {
  const auto src = math_source(2, 5, 3);
  const auto out = sample_per_cell(src, 5, 123);
  for (const auto& s : out.subjects) {
    const auto slash = s.subject_id.find('/');
    const int j = std::stoi(s.subject_id.substr(slash + 1)) - 1;
    for (const auto& e : s.explanations) {
      EXPECT_EQ(e.text, "t" + s.title.substr(4) + "-" + std::to_string(j) + "@" + std::to_string(e.level));
    }
  }
}

TEST(CorpusSample, SameSeedSameSelection) {
  const auto src = math_source(3, 10, 5);
  std::ostringstream a, b, c;
  write_dataset(sample_per_cell(src, 3, 1), a);
  write_dataset(sample_per_cell(src, 3, 1), b);
  write_dataset(sample_per_cell(src, 3, 2), c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(CorpusSample, InsufficientCellNamed) {
  try {
    sample_per_cell(math_source(2, 3, 2), 4, 0);
    FAIL();
  } catch (const InsufficientCell& e) {
    EXPECT_NE(std::string(e.what()).find("type0"), std::string::npos) << e.what();
  }
}

TEST(CorpusSample, RequiresMathKind) {
  EXPECT_THROW(sample_per_cell(testing::synthetic_dataset(3, 3), 1, 0), PreconditionError);
}

// ---------------------------------------------------------------------------
// level_orderings
// ---------------------------------------------------------------------------

TEST(CorpusOrderings, TenPermutationsReproducible) {
  const auto a = level_orderings(5, 10, 42);
  const auto b = level_orderings(5, 10, 42);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a, b);
  for (const auto& p : a) EXPECT_TRUE(is_permutation_of_levels(p, 5));
  EXPECT_NE(a, level_orderings(5, 10, 43));
}

TEST(CorpusOrderings, SingleLevel) {
  EXPECT_EQ(level_orderings(1, 1, 9), (std::vector<Permutation>{{1}}));
}

TEST(CorpusOrderings, TooManyDistinct) {
  EXPECT_THROW(level_orderings(3, 7, 0, true), TooManyDistinct);
  const auto all = level_orderings(3, 6, 0, true);
  EXPECT_EQ(std::set<Permutation>(all.begin(), all.end()).size(), 6u);
}

TEST(CorpusOrderings, ApproximatelyUniform) {
  // 6 orderings of 3 levels, 6000 draws: each should appear ~1000 times.
  std::map<Permutation, int> counts;
  for (const auto& p : level_orderings(3, 6000, 5)) ++counts[p];
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [p, n] : counts) {
    EXPECT_GT(n, 880);
    EXPECT_LT(n, 1120);
  }
}

TEST(CorpusOrderings, RejectsNonPermutations) {
  EXPECT_FALSE(is_permutation_of_levels({1, 1, 3}, 3));
  EXPECT_FALSE(is_permutation_of_levels({1, 2}, 3));
  EXPECT_FALSE(is_permutation_of_levels({0, 1, 2}, 3));
  EXPECT_TRUE(is_permutation_of_levels({3, 1, 2}, 3));
}

}  // namespace
}  // namespace teachaudit::corpus
