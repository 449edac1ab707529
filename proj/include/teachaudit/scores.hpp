#pragma once

// Turns raw trial records into per-characteristic score tables.

#include <string_view>
#include <vector>

#include "teachaudit/biasstats.hpp"
#include "teachaudit/taskrunner.hpp"

namespace teachaudit::stats {

/// MCV table: chosen levels keyed by (subject, ordering). Full refusals and
/// unparseable trials are kept as missing values and counted.
ScoreTable score_table(const runner::RankingResults& results);
/// MGL table: TGL keyed by (topic, 0). Records without a grade are missing.
ScoreTable score_table(const runner::GenerationResults& results);

/// Mean chosen level over retained trials. Throws NoData.
double mcv(const runner::RankingResults& results, std::string_view characteristic_id);
/// Mean TGL over graded records. Throws NoData.
double mgl(const std::vector<runner::GenerationRecord>& records, std::string_view characteristic_id);

}  // namespace teachaudit::stats
