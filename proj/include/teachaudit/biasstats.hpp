#pragma once

// Point estimates (MCV / MGL), subgroup z-normalization, MAB / MDB bias
// scores, paired bootstrap intervals, the Friedman test, and Pearson r.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "teachaudit/cohort.hpp"

namespace teachaudit::stats {

enum class MetricKind { mcv, mgl };

std::string_view to_string(MetricKind kind);

/// Pairs trials across characteristics: every characteristic sees the same
/// (subject, ordering) keys.
struct TrialKey {
  std::string subject_id;
  int ordering_index = 0;

  auto operator<=>(const TrialKey&) const = default;
};

using PointMap = std::map<std::string, double>;

/// Per-characteristic scores aligned with `keys`. A missing value means the
/// trial was dropped (full refusal, unparseable, or degenerate text).
struct ScoreTable {
  MetricKind kind = MetricKind::mcv;
  int level_count = 0;  // MCV only
  std::vector<TrialKey> keys;
  std::map<std::string, std::vector<std::optional<double>>> scores;
  std::map<std::string, std::size_t> trials;         // attempted, per characteristic
  std::map<std::string, std::size_t> full_refusals;  // per characteristic

  std::size_t retained(const std::string& id) const;
  /// Mean of retained scores. Throws NoData.
  double point(const std::string& id) const;
  PointMap points(const cohort::Subgroup& subgroup) const;

  /// Adds one score; keys are created on first use.
  void add(const std::string& characteristic_id, const TrialKey& key, std::optional<double> value);
  /// Checks the value domain (1..L for MCV, [0,25) for MGL) and that every
  /// cohort characteristic is present. Returns human-readable problems.
  std::vector<std::string> validate(const cohort::Cohort& cohort) const;
};

double mean(std::span<const double> values);
/// Population standard deviation (divides by n).
double population_sd(std::span<const double> values);

/// z(s) = (F(s) - mean) / population sd over the subgroup members.
/// Throws NoData if a member is missing and ZeroVariance if all are equal.
PointMap zscores(const PointMap& points, const cohort::Subgroup& subgroup);

double mab(const PointMap& z);
double mdb(const PointMap& z);

struct SubgroupScores {
  PointMap points;
  PointMap z;
  double mab = 0;
  double mdb = 0;
  bool degenerate = false;  // zero variance: z, MAB and MDB reported as 0
};

SubgroupScores score_subgroup(const PointMap& points, const cohort::Subgroup& subgroup);

struct Interval {
  double lo = 0;
  double hi = 0;
};

enum class BootstrapStat { z_per_char, mab, mdb };

struct BootstrapOptions {
  std::size_t replicates = 2000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct SubgroupIntervals {
  std::map<std::string, Interval> point;  // raw F per characteristic
  std::map<std::string, Interval> z;
  Interval mab;
  Interval mdb;
  std::size_t replicates_used = 0;
  std::size_t replicates_dropped = 0;  // a member had no retained trial
};

/// Percentile intervals from paired resampling of trial keys. Every
/// replicate recomputes points, z, MAB and MDB. Intervals are widened to
/// contain the full-sample point estimate. Throws NoData when a subgroup has
/// no usable replicate, PreconditionError on bad options.
std::map<std::string, SubgroupIntervals> bootstrap_intervals(const ScoreTable& table,
                                                             const cohort::Cohort& cohort,
                                                             const BootstrapOptions& options);

/// Single-statistic view. Targets are characteristic ids for z_per_char and
/// subgroup ids for MAB / MDB.
std::map<std::string, Interval> bootstrap_ci(const ScoreTable& table, const cohort::Cohort& cohort,
                                             BootstrapStat stat, const BootstrapOptions& options);

/// Linear-interpolation quantile (type 7) of sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

struct FriedmanResult {
  double q = 0;
  int df = 0;
  double p = 1;
  std::size_t blocks = 0;
  std::size_t dropped = 0;
};

/// Rows are blocks, columns are treatments. Midranks for ties and the
/// tie-corrected statistic. Throws TooFewBlocks / PreconditionError.
FriedmanResult friedman(const std::vector<std::vector<double>>& blocks);
/// Blocks are trial keys; keys missing any member's score are dropped.
FriedmanResult friedman(const ScoreTable& table, const cohort::Subgroup& subgroup);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, int df);

/// Sample Pearson correlation. Throws LengthMismatch / ZeroVariance.
double pearson_r(std::span<const double> x, std::span<const double> y);

}  // namespace teachaudit::stats
