#include "teachaudit/scores.hpp"

#include <algorithm>
#include <set>

#include "teachaudit/errors.hpp"

namespace teachaudit::stats {

namespace {

// Builds columns in one pass; ScoreTable::add is quadratic for large runs.
template <typename Records, typename KeyOf, typename IdOf, typename ValueOf>
ScoreTable build(MetricKind kind, const Records& records, KeyOf key_of, IdOf id_of, ValueOf value_of) {
  ScoreTable table;
  table.kind = kind;
  std::set<TrialKey> keys;
  for (const auto& r : records) keys.insert(key_of(r));
  table.keys.assign(keys.begin(), keys.end());
  for (const auto& r : records) {
    const auto& id = id_of(r);
    auto [it, inserted] = table.scores.try_emplace(id);
    if (inserted) it->second.assign(table.keys.size(), std::nullopt);
    const auto pos = std::lower_bound(table.keys.begin(), table.keys.end(), key_of(r)) - table.keys.begin();
    it->second[static_cast<std::size_t>(pos)] = value_of(r);
    ++table.trials[id];
  }
  return table;
}

}  // namespace

ScoreTable score_table(const runner::RankingResults& results) {
  auto table = build(
      MetricKind::mcv, results.records,
      [](const runner::TrialRecord& r) { return TrialKey{r.spec.subject_id, r.spec.ordering_index}; },
      [](const runner::TrialRecord& r) -> const std::string& { return r.spec.characteristic_id; },
      [](const runner::TrialRecord& r) -> std::optional<double> {
        if (r.outcome.kind != runner::OutcomeKind::chosen) return std::nullopt;
        return static_cast<double>(*r.outcome.level);
      });
  table.level_count = results.metadata.level_count;
  for (const auto& r : results.records) {
    if (r.outcome.kind == runner::OutcomeKind::full_refusal) ++table.full_refusals[r.spec.characteristic_id];
  }
  return table;
}

ScoreTable score_table(const runner::GenerationResults& results) {
  return build(
      MetricKind::mgl, results.records,
      [](const runner::GenerationRecord& r) { return TrialKey{r.topic, 0}; },
      [](const runner::GenerationRecord& r) -> const std::string& { return r.characteristic_id; },
      [](const runner::GenerationRecord& r) -> std::optional<double> {
        if (!r.grade) return std::nullopt;
        return r.grade->tgl;
      });
}

double mcv(const runner::RankingResults& results, std::string_view characteristic_id) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : results.records) {
    if (r.spec.characteristic_id == characteristic_id && r.outcome.kind == runner::OutcomeKind::chosen) {
      sum += *r.outcome.level;
      ++n;
    }
  }
  if (n == 0) throw NoData("no retained ranking trials for " + std::string(characteristic_id));
  return sum / static_cast<double>(n);
}

double mgl(const std::vector<runner::GenerationRecord>& records, std::string_view characteristic_id) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.characteristic_id == characteristic_id && r.grade) {
      sum += r.grade->tgl;
      ++n;
    }
  }
  if (n == 0) throw NoData("no graded generations for " + std::string(characteristic_id));
  return sum / static_cast<double>(n);
}

}  // namespace teachaudit::stats
