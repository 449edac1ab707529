// Tests for choice parsing, the ranking and generation runners, refusal
// accounting, adjudication and the raw results format.

#include "teachaudit/taskrunner.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "teachaudit/errors.hpp"
#include "teachaudit/rng.hpp"
#include "test_support.hpp"

namespace teachaudit::runner {
namespace {

using nlohmann::json;

const auto& kMarkers = default_refusal_markers();

ChoiceOutcome parse(std::string_view text, const corpus::Permutation& perm = {1, 2, 3, 4, 5}) {
  return parse_choice(text, static_cast<int>(perm.size()), prompt::RankingPresentation(perm), kMarkers);
}

// ---------------------------------------------------------------------------
// parse_choice
// ---------------------------------------------------------------------------

TEST(ParseChoice, BareLetterWithPunctuation) {
  const auto o = parse("B.", {2, 3, 1});
  EXPECT_EQ(o.kind, OutcomeKind::chosen);
  EXPECT_EQ(o.level, 3);
  EXPECT_FALSE(o.partial_refusal);
  EXPECT_EQ(o.raw_text, "B.");
}

TEST(ParseChoice, RefusalOnly) {
  const auto o = parse("I cannot make assumptions based on race.");
  EXPECT_EQ(o.kind, OutcomeKind::full_refusal);
  EXPECT_FALSE(o.level.has_value());
}

TEST(ParseChoice, RefusalWithLetterIsPartial) {
  const auto o = parse("While it would be wrong to base this on the student's background, I'd pick A.", {4, 1, 2, 3, 5});
  EXPECT_EQ(o.kind, OutcomeKind::chosen);
  EXPECT_EQ(o.level, 4);
  EXPECT_TRUE(o.partial_refusal);
}

TEST(ParseChoice, Prefixes) {
  EXPECT_EQ(parse("Choice: C").level, 3);
  EXPECT_EQ(parse("Answer: (d)").level, 4);
  EXPECT_EQ(parse("**Answer:** B").level, 2);
  EXPECT_EQ(parse("The answer is e.").level, 5);
  EXPECT_EQ(parse("option b").level, 2);
  EXPECT_EQ(parse("c").level, 3);
  EXPECT_EQ(parse("  (E)  ").level, 5);
}

TEST(ParseChoice, ArticlesAndPronounsAreNotChoices) {
  EXPECT_EQ(parse("A good choice here is C.").level, 3);
  EXPECT_EQ(parse("I think D fits best.").level, 4);
  EXPECT_EQ(parse("I would choose B.").level, 2);
  // An isolated uppercase A outside sentence-initial position is a choice.
  EXPECT_EQ(parse("I would choose A because it is simplest.").level, 1);
  EXPECT_EQ(parse("A").level, 1);
  EXPECT_EQ(parse("A. Because it is simple.").level, 1);
}

TEST(ParseChoice, LowercaseLettersInProseIgnored) {
  const auto o = parse("this is a tricky one, honestly.");
  EXPECT_EQ(o.kind, OutcomeKind::unparseable);
}

TEST(ParseChoice, OutOfRangeLettersIgnored) {
  EXPECT_EQ(parse("F", {1, 2, 3, 4, 5}).kind, OutcomeKind::unparseable);
  EXPECT_EQ(parse("D then C", {1, 2, 3}).level, 3);
  EXPECT_EQ(parse("Z!").kind, OutcomeKind::unparseable);
}

TEST(ParseChoice, LettersInsideWordsIgnored) {
  EXPECT_EQ(parse("Because...").kind, OutcomeKind::unparseable);
  EXPECT_EQ(parse("It's B").level, 2);
  EXPECT_EQ(parse("Don't know").kind, OutcomeKind::unparseable);
}

TEST(ParseChoice, MarkersAreCaseInsensitive) {
  EXPECT_EQ(parse("i CANNOT answer that").kind, OutcomeKind::full_refusal);
  const std::vector<std::string> custom = {"nope"};
  EXPECT_EQ(parse_choice("NOPE", 3, prompt::RankingPresentation({1, 2, 3}), custom).kind, OutcomeKind::full_refusal);
  EXPECT_EQ(parse_choice("I cannot", 3, prompt::RankingPresentation({1, 2, 3}), custom).kind,
            OutcomeKind::unparseable);
}

TEST(ParseChoice, EmptyIsUnparseable) { EXPECT_EQ(parse("").kind, OutcomeKind::unparseable); }

// Exhaustive over every permutation and letter for L in {3, 5}, with a few
// reply shapes per letter.
TEST(ParseChoice, PermutationCorrectExhaustive) {
  for (int L : {3, 5}) {
    corpus::Permutation perm(static_cast<std::size_t>(L));
    std::iota(perm.begin(), perm.end(), 1);
    do {
      const prompt::RankingPresentation pres(perm);
      for (int i = 0; i < L; ++i) {
        const char letter = static_cast<char>('A' + i);
        for (const std::string& reply : {std::string(1, letter), std::string(1, letter) + ".",
                                         "Answer: " + std::string(1, letter), "(" + std::string(1, letter) + ")"}) {
          const auto o = parse_choice(reply, L, pres, kMarkers);
          ASSERT_EQ(o.kind, OutcomeKind::chosen) << reply;
          ASSERT_EQ(o.level, perm[static_cast<std::size_t>(i)]) << reply;
        }
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(RefusalMarkers, LoadFromFile) {
  testing::TempDir dir;
  testing::spit(dir / "m.txt", "# comment\nI refuse\n\nno way  \r\n");
  EXPECT_EQ(load_refusal_markers(dir / "m.txt"), (std::vector<std::string>{"I refuse", "no way"}));
  EXPECT_THROW(load_refusal_markers(dir / "missing.txt"), IoError);
}

// ---------------------------------------------------------------------------
// run_ranking
// ---------------------------------------------------------------------------

gate::ModelConfig oracle_config(gate::OracleProfile profile) {
  gate::ModelConfig cfg;
  cfg.oracle = std::move(profile);
  cfg.concurrency = 3;
  return cfg;
}

std::string serialize(const RunResults& r) {
  std::ostringstream out;
  std::visit([&](const auto& x) { write_results(x, out); }, r);
  return out.str();
}

TEST(RunRanking, TrialCountAndEnumerationOrder) {
  const auto d = testing::synthetic_dataset(4, 5);
  const auto cohort = testing::small_cohort({"p", "q", "r"});
  gate::Gateway gw(oracle_config({}), std::nullopt);
  RankingOptions opts;
  opts.n_orderings = 3;
  opts.seed = 1;
  const auto res = run_ranking(d, cohort, gw, opts);
  ASSERT_EQ(res.records.size(), 4u * 3u * 5u);
  std::size_t i = 0;
  for (const auto& s : d.subjects) {
    for (int o = 0; o < 3; ++o) {
      for (const auto& ch : cohort.characteristics()) {
        const auto& spec = res.records[i++].spec;
        EXPECT_EQ(spec.subject_id, s.subject_id);
        EXPECT_EQ(spec.ordering_index, o);
        EXPECT_EQ(spec.characteristic_id, ch.id);
      }
    }
  }
  EXPECT_EQ(res.metadata.task, "ranking");
  EXPECT_EQ(res.metadata.generator_id, kGeneratorId);
  EXPECT_EQ(res.metadata.level_count, 5);
  EXPECT_EQ(res.metadata.templates_digest, prompt::TemplateSet::defaults().digest());
  EXPECT_EQ(res.metadata.choice_layout, prompt::kChoiceLayout);
}

TEST(RunRanking, PromptCountsForPublishedShapes) {
  // 26 subjects x 10 orderings = 260 prompts per characteristic.
  const auto cohort = testing::small_cohort({"p", "q"}, {});
  gate::Gateway gw(oracle_config({}), std::nullopt);
  RankingOptions opts;
  opts.n_orderings = 10;
  const auto res = run_ranking(testing::synthetic_dataset(26, 5), cohort, gw, opts);
  std::size_t per = 0;
  for (const auto& r : res.records) per += r.spec.characteristic_id == "p" ? 1 : 0;
  EXPECT_EQ(per, 260u);
}

TEST(RunRanking, OrderingsSharedAcrossCharacteristicsAndValid) {
  const auto d = testing::synthetic_dataset(3, 5);
  const auto cohort = testing::small_cohort({"p", "q"});
  gate::Gateway gw(oracle_config({}), std::nullopt);
  RankingOptions opts;
  opts.n_orderings = 4;
  const auto res = run_ranking(d, cohort, gw, opts);
  std::map<std::pair<std::string, int>, corpus::Permutation> seen;
  for (const auto& r : res.records) {
    EXPECT_TRUE(corpus::is_permutation_of_levels(r.spec.permutation, 5));
    auto [it, inserted] = seen.try_emplace({r.spec.subject_id, r.spec.ordering_index}, r.spec.permutation);
    if (!inserted) {
      EXPECT_EQ(it->second, r.spec.permutation);
    }
  }
}

TEST(RunRanking, OracleLevelsRecovered) {
  gate::OracleProfile profile;
  profile.base_level = 3;
  // Phrases must not occur inside "beginner" or "expert".
  profile.offsets = {{"pp", -1}, {"rr", 2}};
  const auto d = testing::synthetic_dataset(5, 5);
  const auto cohort = testing::small_cohort({"pp", "qq", "rr"});
  gate::Gateway gw(oracle_config(profile), std::nullopt);
  RankingOptions opts;
  opts.n_orderings = 4;
  const auto res = run_ranking(d, cohort, gw, opts);
  const std::map<std::string, int> expected = {{"pp", 2}, {"qq", 3}, {"rr", 5}, {"beginner", 3}, {"expert", 3}};
  for (const auto& r : res.records) {
    ASSERT_EQ(r.outcome.kind, OutcomeKind::chosen);
    EXPECT_EQ(r.outcome.level, expected.at(r.spec.characteristic_id));
  }
}

TEST(RunRanking, DeterministicFiles) {
  gate::OracleProfile profile;
  profile.jitter = 1.2;
  profile.refusal = {{"q", 0.3}};
  const auto d = testing::synthetic_dataset(6, 5);
  const auto cohort = testing::small_cohort({"p", "q", "r"});
  RankingOptions opts;
  opts.n_orderings = 5;
  opts.seed = 17;
  std::string a, b;
  {
    gate::Gateway gw(oracle_config(profile), std::nullopt);
    a = serialize(run_ranking(d, cohort, gw, opts));
  }
  {
    auto cfg = oracle_config(profile);
    cfg.concurrency = 1;
    gate::Gateway gw(cfg, std::nullopt);
    b = serialize(run_ranking(d, cohort, gw, opts));
  }
  EXPECT_EQ(a, b);
}

// A transport that fails every call: errors are recorded per trial.
class FailingTransport final : public gate::Transport {
 public:
  gate::HttpReply post_json(const std::string&, const std::string&, const std::map<std::string, std::string>&,
                            std::chrono::milliseconds) override {
    return {503, "", ""};
  }
};

TEST(RunRanking, EndpointErrorsRecordedNotThrown) {
  gate::ModelConfig cfg;
  cfg.endpoint = "https://example.invalid/v1";
  cfg.max_retries = 0;
  ::setenv(gate::kApiKeyEnv, "sk-test", 1);
  gate::Gateway gw(cfg, std::nullopt, std::make_unique<FailingTransport>());
  const auto res = run_ranking(testing::synthetic_dataset(2, 3), testing::small_cohort({"p", "q"}, {}), gw, {});
  ASSERT_EQ(res.records.size(), 4u);
  for (const auto& r : res.records) {
    EXPECT_EQ(r.outcome.kind, OutcomeKind::unparseable);
    EXPECT_NE(r.error.find("giving up"), std::string::npos) << r.error;
  }
  ::unsetenv(gate::kApiKeyEnv);
}

TEST(RunRanking, ResumeReusesCachedRecords) {
  testing::TempDir dir;
  gate::OracleProfile profile;
  profile.jitter = 1;
  const auto d = testing::synthetic_dataset(3, 5);
  const auto cohort = testing::small_cohort({"p", "q"});
  RankingOptions opts;
  opts.n_orderings = 2;
  RankingResults first;
  {
    gate::Gateway gw(oracle_config(profile), dir.path());
    first = run_ranking(d, cohort, gw, opts);
  }
  // Mark one record adjudicated; resuming keeps it because its hash is cached.
  first.records[0].outcome.human_adjudicated = true;
  auto cfg = oracle_config(profile);
  cfg.offline = true;
  gate::Gateway offline(cfg, dir.path());
  opts.resume = &first;
  const auto second = run_ranking(d, cohort, offline, opts);
  EXPECT_TRUE(second.records[0].outcome.human_adjudicated);
  for (std::size_t i = 0; i < first.records.size(); ++i) {
    EXPECT_EQ(second.records[i].outcome.level, first.records[i].outcome.level);
    EXPECT_TRUE(second.records[i].error.empty());
  }
}

TEST(RunRanking, InvalidDatasetRejected) {
  auto d = testing::synthetic_dataset(2, 3);
  d.subjects[0].explanations.pop_back();
  gate::Gateway gw(oracle_config({}), std::nullopt);
  EXPECT_THROW(run_ranking(d, testing::small_cohort({"p", "q"}), gw, {}), InvariantError);
}

// ---------------------------------------------------------------------------
// run_generation
// ---------------------------------------------------------------------------

TEST(RunGeneration, OneRecordPerTopicAndCharacteristic) {
  gate::OracleProfile profile;
  profile.generation_texts = {"Short words here. Easy to read."};
  gate::Gateway gw(oracle_config(profile), std::nullopt);
  const auto cohort = testing::small_cohort({"p", "q", "r"});
  const std::vector<std::string> topics = {"Origami", "Tides", "Bees"};
  const auto res = run_generation(topics, cohort, gw);
  ASSERT_EQ(res.records.size(), 3u * 5u);
  std::set<double> grades;
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.grade.has_value());
    EXPECT_DOUBLE_EQ(r.grade->tgl, readability::tgl(r.text));
    grades.insert(r.grade->tgl);
    EXPECT_FALSE(r.non_english_flag);
  }
  EXPECT_EQ(grades.size(), 1u);  // fixed text, fixed grade
  EXPECT_EQ(res.metadata.task, "generation");
}

TEST(RunGeneration, EmptyTopicsRejected) {
  gate::Gateway gw(oracle_config({}), std::nullopt);
  EXPECT_THROW(run_generation({}, testing::small_cohort({"p", "q"}), gw), PreconditionError);
}

TEST(RunGeneration, DegenerateTextHasNoGrade) {
  gate::OracleProfile profile;
  profile.generation_texts = {"..."};
  gate::Gateway gw(oracle_config(profile), std::nullopt);
  const auto res = run_generation({"X"}, testing::small_cohort({"p", "q"}, {}), gw);
  for (const auto& r : res.records) EXPECT_FALSE(r.grade.has_value());
}

TEST(NonEnglish, Heuristic) {
  EXPECT_FALSE(looks_non_english("Too short to judge."));
  const std::string english =
      "The water cycle is the path that water takes as it moves from the ground to the sky and back again. "
      "It is driven by the sun.";
  EXPECT_FALSE(looks_non_english(english));
  const std::string spanish =
      "Fotosintesis convierte energia luminosa quimica mediante clorofila hojas verdes produciendo glucosa "
      "oxigeno agua dioxido carbono plantas algas bacterias ciertas usan proceso vital ecosistemas terrestres "
      "acuaticos.";
  EXPECT_TRUE(looks_non_english(spanish));
}

// ---------------------------------------------------------------------------
// adjudicate and refusal stats
// ---------------------------------------------------------------------------

RankingResults with_unparseables(int n_unparseable) {
  RankingResults r;
  r.metadata.task = "ranking";
  r.metadata.model_id = "m";
  r.metadata.dataset = "d";
  r.metadata.level_count = 5;
  for (int i = 0; i < n_unparseable + 2; ++i) {
    TrialRecord t;
    t.spec = {"d", "s" + std::to_string(i), "p", prompt::Role::teacher, 0, {1, 2, 3, 4, 5},
              sha256_hex(std::to_string(i))};
    t.outcome.raw_text = "hmm";
    if (i >= n_unparseable) {
      t.outcome.kind = OutcomeKind::chosen;
      t.outcome.level = 3;
    }
    r.records.push_back(t);
  }
  return r;
}

TEST(Adjudicate, ResolvesTwoOfFive) {
  const auto r = with_unparseables(5);
  std::istringstream in(json{{"request_hash", sha256_hex("0")}, {"level", 4}}.dump() + "\n" +
                        json{{"request_hash", sha256_hex("3")}, {"level", "full_refusal"}}.dump() + "\n");
  const auto out = adjudicate(r, in);
  const auto stats = refusal_stats(out).at("p");
  EXPECT_EQ(stats.unparseable, 3u);
  EXPECT_EQ(stats.full_refusals, 1u);
  EXPECT_EQ(out.records[0].outcome.level, 4);
  EXPECT_TRUE(out.records[0].outcome.human_adjudicated);
  EXPECT_EQ(out.records[0].outcome.raw_text, "hmm");
  EXPECT_FALSE(out.records[5].outcome.human_adjudicated);
}

TEST(Adjudicate, ChosenRecordsUntouched) {
  const auto r = with_unparseables(1);
  std::istringstream in(json{{"request_hash", sha256_hex("2")}, {"level", 1}}.dump());
  const auto out = adjudicate(r, in);
  EXPECT_EQ(out.records[2].outcome.level, 3);
  EXPECT_FALSE(out.records[2].outcome.human_adjudicated);
}

TEST(Adjudicate, Errors) {
  const auto r = with_unparseables(2);
  std::istringstream unknown(json{{"request_hash", "ff"}, {"level", 1}}.dump());
  EXPECT_THROW(adjudicate(r, unknown), UnknownHash);
  std::istringstream high(json{{"request_hash", sha256_hex("0")}, {"level", 7}}.dump());
  EXPECT_THROW(adjudicate(r, high), LevelOutOfRange);
  std::istringstream junk("{nope");
  EXPECT_THROW(adjudicate(r, junk), ParseError);
}

TEST(RefusalStats, PerCharacteristic) {
  auto r = with_unparseables(0);
  r.records[0].outcome.partial_refusal = true;
  r.records[1].outcome = {OutcomeKind::full_refusal, std::nullopt, false, false, "I cannot"};
  const auto s = refusal_stats(r).at("p");
  EXPECT_EQ(s.trials, 2u);
  EXPECT_EQ(s.partial_refusals, 1u);
  EXPECT_EQ(s.full_refusals, 1u);
  EXPECT_DOUBLE_EQ(s.full_refusal_rate(), 0.5);
}

// ---------------------------------------------------------------------------
// results files
// ---------------------------------------------------------------------------

TEST(ResultsFile, RankingRoundTrip) {
  gate::OracleProfile profile;
  profile.jitter = 1;
  profile.refusal = {{"q", 0.5}};
  gate::Gateway gw(oracle_config(profile), std::nullopt);
  RankingOptions opts;
  opts.n_orderings = 3;
  const auto res = run_ranking(testing::synthetic_dataset(3, 5), testing::small_cohort({"p", "q"}), gw, opts);
  const auto text = serialize(res);
  std::istringstream in(text);
  const auto back = read_results(in);
  ASSERT_TRUE(std::holds_alternative<RankingResults>(back));
  EXPECT_EQ(serialize(back), text);

  const auto header = json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(header.at("record"), "metadata");
  EXPECT_TRUE(header.at("refusal_stats").contains("q"));
  const auto start = text.find('\n') + 1;
  const auto first = json::parse(text.substr(start, text.find('\n', start) - start));
  EXPECT_EQ(first.at("raw_text_sha256"), sha256_hex(first.at("raw_text").get<std::string>()));
}

TEST(ResultsFile, GenerationRoundTrip) {
  gate::OracleProfile profile;
  profile.generation_texts = {"One two three. Four five six seven."};
  gate::Gateway gw(oracle_config(profile), std::nullopt);
  const auto res = run_generation({"A", "B"}, testing::small_cohort({"p", "q"}), gw);
  testing::TempDir dir;
  write_results_file(res, dir / "sub" / "g.jsonl");
  const auto back = read_results_file(dir / "sub" / "g.jsonl");
  ASSERT_TRUE(std::holds_alternative<GenerationResults>(back));
  EXPECT_EQ(serialize(back), serialize(res));
}

TEST(ResultsFile, Malformed) {
  std::istringstream no_meta(R"({"record":"trial"})");
  EXPECT_THROW(read_results(no_meta), ParseError);
  std::istringstream bad("not json\n");
  EXPECT_THROW(read_results(bad), ParseError);
  EXPECT_THROW(read_results_file("/nonexistent/x.jsonl"), IoError);
}

}  // namespace
}  // namespace teachaudit::runner
