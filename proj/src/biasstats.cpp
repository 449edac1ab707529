#include "teachaudit/biasstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "teachaudit/errors.hpp"
#include "teachaudit/parallel.hpp"
#include "teachaudit/readability.hpp"
#include "teachaudit/rng.hpp"

namespace teachaudit::stats {

std::string_view to_string(MetricKind kind) { return kind == MetricKind::mcv ? "MCV" : "MGL"; }

// ---------------------------------------------------------------- ScoreTable

std::size_t ScoreTable::retained(const std::string& id) const {
  auto it = scores.find(id);
  if (it == scores.end()) return 0;
  return static_cast<std::size_t>(
      std::count_if(it->second.begin(), it->second.end(), [](const auto& v) { return v.has_value(); }));
}

double ScoreTable::point(const std::string& id) const {
  auto it = scores.find(id);
  double sum = 0;
  std::size_t n = 0;
  if (it != scores.end()) {
    for (const auto& v : it->second) {
      if (v) {
        sum += *v;
        ++n;
      }
    }
  }
  if (n == 0) throw NoData("no retained trials for " + id);
  return sum / static_cast<double>(n);
}

PointMap ScoreTable::points(const cohort::Subgroup& subgroup) const {
  PointMap out;
  for (const auto& id : subgroup.characteristic_ids) out[id] = point(id);
  return out;
}

void ScoreTable::add(const std::string& characteristic_id, const TrialKey& key, std::optional<double> value) {
  auto pos = std::lower_bound(keys.begin(), keys.end(), key);
  std::size_t index = static_cast<std::size_t>(pos - keys.begin());
  if (pos == keys.end() || *pos != key) {
    keys.insert(pos, key);
    for (auto& [id, column] : scores) column.insert(column.begin() + static_cast<std::ptrdiff_t>(index), std::nullopt);
  }
  auto [it, inserted] = scores.try_emplace(characteristic_id);
  if (inserted) it->second.assign(keys.size(), std::nullopt);
  it->second[index] = value;
  ++trials[characteristic_id];
}

std::vector<std::string> ScoreTable::validate(const cohort::Cohort& cohort) const {
  std::vector<std::string> problems;
  for (const auto& c : cohort.characteristics()) {
    if (!scores.count(c.id)) problems.push_back("characteristic " + c.id + " missing from score table");
  }
  for (const auto& [id, column] : scores) {
    if (column.size() != keys.size()) problems.push_back("column " + id + " misaligned with trial keys");
    for (const auto& v : column) {
      if (!v) continue;
      const bool ok = kind == MetricKind::mcv
                          ? (*v >= 1 && *v <= level_count && std::floor(*v) == *v)
                          : (*v >= 0 && *v < readability::kMaxGrade);
      if (!ok) {
        problems.push_back("value " + std::to_string(*v) + " outside the " + std::string(to_string(kind)) +
                           " domain for " + id);
        break;
      }
    }
  }
  return problems;
}

// ------------------------------------------------------------- normalization

double mean(std::span<const double> values) {
  if (values.empty()) throw NoData("mean of empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double population_sd(std::span<const double> values) {
  const double m = mean(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

PointMap zscores(const PointMap& points, const cohort::Subgroup& subgroup) {
  std::vector<double> values;
  for (const auto& id : subgroup.characteristic_ids) {
    auto it = points.find(id);
    if (it == points.end()) throw NoData("subgroup " + subgroup.id + " lacks a point for " + id);
    values.push_back(it->second);
  }
  const double m = mean(values);
  const double sd = population_sd(values);
  if (!(sd > 0)) throw ZeroVariance("subgroup " + subgroup.id + " has identical member scores");
  PointMap z;
  if (values.size() == 2) {
    // Exactly +-1; the general formula can be off by an ulp.
    z[subgroup.characteristic_ids[0]] = values[0] < values[1] ? -1.0 : 1.0;
    z[subgroup.characteristic_ids[1]] = values[0] < values[1] ? 1.0 : -1.0;
    return z;
  }
  for (std::size_t i = 0; i < values.size(); ++i) z[subgroup.characteristic_ids[i]] = (values[i] - m) / sd;
  return z;
}

double mab(const PointMap& z) {
  if (z.empty()) throw PreconditionError("mab of empty subgroup");
  double sum = 0;
  for (const auto& [id, v] : z) sum += std::abs(v);
  return sum / static_cast<double>(z.size());
}

double mdb(const PointMap& z) {
  if (z.empty()) throw PreconditionError("mdb of empty subgroup");
  auto [lo, hi] = std::minmax_element(z.begin(), z.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
  return hi->second - lo->second;
}

SubgroupScores score_subgroup(const PointMap& points, const cohort::Subgroup& subgroup) {
  SubgroupScores out;
  for (const auto& id : subgroup.characteristic_ids) {
    auto it = points.find(id);
    if (it == points.end()) throw NoData("subgroup " + subgroup.id + " lacks a point for " + id);
    out.points[id] = it->second;
  }
  try {
    out.z = zscores(out.points, subgroup);
    out.mab = mab(out.z);
    out.mdb = mdb(out.z);
  } catch (const ZeroVariance&) {
    out.degenerate = true;
    for (const auto& id : subgroup.characteristic_ids) out.z[id] = 0.0;
    out.mab = 0;
    out.mdb = 0;
  }
  return out;
}

// ------------------------------------------------------------------ bootstrap

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw NoData("quantile of empty set");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

struct Replicate {
  bool usable = false;
  std::vector<double> points;
  std::vector<double> z;
  double mab = 0;
  double mdb = 0;
};

Interval percentile(std::vector<double> values, double level, double point) {
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  Interval iv{quantile_sorted(values, tail), quantile_sorted(values, 1.0 - tail)};
  iv.lo = std::min(iv.lo, point);
  iv.hi = std::max(iv.hi, point);
  return iv;
}

}  // namespace

std::map<std::string, SubgroupIntervals> bootstrap_intervals(const ScoreTable& table,
                                                             const cohort::Cohort& cohort,
                                                             const BootstrapOptions& options) {
  if (options.replicates < 100) throw PreconditionError("bootstrap needs at least 100 replicates");
  if (!(options.level > 0 && options.level < 1)) throw PreconditionError("confidence level must be in (0,1)");
  const std::size_t n = table.keys.size();
  if (n == 0) throw NoData("score table has no trials");

  // Subgroups whose members all have full-sample data.
  struct Target {
    const cohort::Subgroup* subgroup;
    SubgroupScores full;
    std::vector<const std::vector<std::optional<double>>*> columns;
  };
  std::vector<Target> targets;
  for (const auto& sg : cohort.subgroups()) {
    try {
      Target t{&sg, score_subgroup(table.points(sg), sg), {}};
      for (const auto& id : sg.characteristic_ids) t.columns.push_back(&table.scores.at(id));
      targets.push_back(std::move(t));
    } catch (const NoData&) {
      continue;
    }
  }

  const std::size_t B = options.replicates;
  std::vector<std::vector<Replicate>> reps(targets.size(), std::vector<Replicate>(B));

  parallel_for(B, options.threads, [&](std::size_t r) {
    Rng rng(derive_seed(options.seed, r));
    std::vector<std::uint32_t> weight(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++weight[static_cast<std::size_t>(rng.uniform_index(n))];

    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto& target = targets[t];
      const auto& ids = target.subgroup->characteristic_ids;
      Replicate rep;
      rep.points.resize(ids.size());
      bool usable = true;
      for (std::size_t m = 0; m < ids.size() && usable; ++m) {
        const auto& column = *target.columns[m];
        double sum = 0;
        std::uint64_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (weight[i] != 0 && column[i]) {
            sum += weight[i] * *column[i];
            count += weight[i];
          }
        }
        if (count == 0) usable = false;
        else rep.points[m] = sum / static_cast<double>(count);
      }
      if (!usable) continue;
      PointMap pm;
      for (std::size_t m = 0; m < ids.size(); ++m) pm[ids[m]] = rep.points[m];
      const auto scored = score_subgroup(pm, *target.subgroup);
      for (const auto& id : ids) rep.z.push_back(scored.z.at(id));
      rep.mab = scored.mab;
      rep.mdb = scored.mdb;
      rep.usable = true;
      reps[t][r] = std::move(rep);
    }
  });

  std::map<std::string, SubgroupIntervals> out;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& target = targets[t];
    const auto& ids = target.subgroup->characteristic_ids;
    SubgroupIntervals si;
    std::vector<std::vector<double>> pts(ids.size()), zs(ids.size());
    std::vector<double> mabs, mdbs;
    for (const auto& rep : reps[t]) {
      if (!rep.usable) {
        ++si.replicates_dropped;
        continue;
      }
      ++si.replicates_used;
      for (std::size_t m = 0; m < ids.size(); ++m) {
        pts[m].push_back(rep.points[m]);
        zs[m].push_back(rep.z[m]);
      }
      mabs.push_back(rep.mab);
      mdbs.push_back(rep.mdb);
    }
    if (si.replicates_used == 0) continue;
    for (std::size_t m = 0; m < ids.size(); ++m) {
      si.point[ids[m]] = percentile(std::move(pts[m]), options.level, target.full.points.at(ids[m]));
      si.z[ids[m]] = percentile(std::move(zs[m]), options.level, target.full.z.at(ids[m]));
    }
    si.mab = percentile(std::move(mabs), options.level, target.full.mab);
    si.mdb = percentile(std::move(mdbs), options.level, target.full.mdb);
    out.emplace(target.subgroup->id, std::move(si));
  }
  return out;
}

std::map<std::string, Interval> bootstrap_ci(const ScoreTable& table, const cohort::Cohort& cohort,
                                             BootstrapStat stat, const BootstrapOptions& options) {
  const auto all = bootstrap_intervals(table, cohort, options);
  if (all.empty()) throw NoData("no subgroup has retained trials for every member");
  std::map<std::string, Interval> out;
  for (const auto& [subgroup_id, si] : all) {
    switch (stat) {
      case BootstrapStat::z_per_char:
        out.insert(si.z.begin(), si.z.end());
        break;
      case BootstrapStat::mab:
        out[subgroup_id] = si.mab;
        break;
      case BootstrapStat::mdb:
        out[subgroup_id] = si.mdb;
        break;
    }
  }
  return out;
}

// ------------------------------------------------------------------- Friedman

FriedmanResult friedman(const std::vector<std::vector<double>>& blocks) {
  if (!blocks.empty() && blocks.front().size() < 2) {
    throw PreconditionError("friedman needs at least 2 treatments");
  }
  if (blocks.size() < 2) throw TooFewBlocks("friedman needs at least 2 complete blocks, got " +
                                            std::to_string(blocks.size()));
  const std::size_t k = blocks.front().size();
  const auto N = static_cast<double>(blocks.size());
  const double center = (static_cast<double>(k) + 1.0) / 2.0;

  std::vector<double> rank_sum(k, 0.0);
  double spread = 0;  // sum over cells of (rank - center)^2
  std::vector<std::size_t> order(k);
  for (const auto& row : blocks) {
    if (row.size() != k) throw PreconditionError("friedman blocks must have equal width");
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    for (std::size_t i = 0; i < k;) {
      std::size_t j = i;
      while (j + 1 < k && row[order[j + 1]] == row[order[i]]) ++j;
      const double midrank = (static_cast<double>(i + j) / 2.0) + 1.0;
      for (std::size_t t = i; t <= j; ++t) {
        rank_sum[order[t]] += midrank;
        spread += (midrank - center) * (midrank - center);
      }
      i = j + 1;
    }
  }

  FriedmanResult res;
  res.df = static_cast<int>(k) - 1;
  res.blocks = blocks.size();
  if (spread <= 0) {
    res.q = 0;
    res.p = 1;
    return res;
  }
  double between = 0;
  for (double rs : rank_sum) {
    const double d = rs / N - center;
    between += d * d;
  }
  res.q = N * between / (spread / (N * (static_cast<double>(k) - 1.0)));
  res.p = chi_square_sf(res.q, res.df);
  return res;
}

FriedmanResult friedman(const ScoreTable& table, const cohort::Subgroup& subgroup) {
  const auto& ids = subgroup.characteristic_ids;
  if (ids.size() < 2) throw PreconditionError("friedman needs at least 2 treatments");
  std::vector<const std::vector<std::optional<double>>*> columns;
  for (const auto& id : ids) {
    auto it = table.scores.find(id);
    if (it == table.scores.end()) throw NoData("no scores for " + id);
    columns.push_back(&it->second);
  }
  std::vector<std::vector<double>> blocks;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < table.keys.size(); ++i) {
    std::vector<double> row;
    for (const auto* col : columns) {
      if (!(*col)[i]) break;
      row.push_back(*(*col)[i]);
    }
    if (row.size() == ids.size()) blocks.push_back(std::move(row));
    else ++dropped;
  }
  if (blocks.size() < 2) {
    throw TooFewBlocks("subgroup " + subgroup.id + " has " + std::to_string(blocks.size()) +
                       " complete blocks (" + std::to_string(dropped) + " dropped)");
  }
  auto res = friedman(blocks);
  res.dropped = dropped;
  return res;
}

double chi_square_sf(double x, int df) {
  if (df < 1) throw PreconditionError("chi-square df must be >= 1");
  if (!(x >= 0)) throw PreconditionError("chi-square statistic must be >= 0");
  if (x == 0) return 1.0;
  return boost::math::gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson_r inputs differ in length");
  if (x.size() < 2) throw PreconditionError("pearson_r needs at least 2 pairs");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) throw ZeroVariance("pearson_r input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace teachaudit::stats
