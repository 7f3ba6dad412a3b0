#pragma once

#include <utility>
#include <vector>

#include "biasscope/core_model.hpp"

namespace biasscope {

/// Deltas are A minus B; bias deltas are in percentage points.
ComparisonReport compare(const ProviderModel& model_a, const BiasReport& report_a,
                         const ProviderModel& model_b, const BiasReport& report_b);

/// Arithmetic mean of per-trial bias percentages. Throws EmptyInput.
double trial_mean(const std::vector<double>& per_trial_bias_pct);

/// Merges the reports of every assistant turn in each column by
/// re-aggregating the concatenated sentence analyses. User and system turns
/// are ignored, so prompt reports never enter a comparison.
std::pair<BiasReport, BiasReport> aggregate_session(const std::vector<ChatTurn>& column_a,
                                                    const std::vector<ChatTurn>& column_b);

BiasReport aggregate_column(const std::vector<ChatTurn>& turns);

}  // namespace biasscope
