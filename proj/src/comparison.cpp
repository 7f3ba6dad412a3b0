#include "biasscope/comparison.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "biasscope/pipeline.hpp"

namespace biasscope {

ComparisonReport compare(const ProviderModel& model_a, const BiasReport& report_a,
                         const ProviderModel& model_b, const BiasReport& report_b) {
  ComparisonReport c;
  c.model_a = model_a;
  c.model_b = model_b;
  c.report_a = report_a;
  c.report_b = report_b;
  c.delta_bias_pct = 100.0 * (report_a.bias_ratio - report_b.bias_ratio);
  c.delta_avg_score = report_a.avg_bias_score - report_b.avg_bias_score;
  std::set<std::string> labels;
  for (const auto& [label, n] : report_a.type_counts) labels.insert(label);
  for (const auto& [label, n] : report_b.type_counts) labels.insert(label);
  for (const auto& label : labels) {
    auto count = [&](const BiasReport& r) {
      auto it = r.type_counts.find(label);
      return it == r.type_counts.end() ? 0LL : static_cast<long long>(it->second);
    };
    c.type_deltas[label] = count(report_a) - count(report_b);
  }
  return c;
}

double trial_mean(const std::vector<double>& per_trial_bias_pct) {
  if (per_trial_bias_pct.empty()) throw EmptyInput("trial_mean needs at least one trial");
  std::vector<double> sorted = per_trial_bias_pct;
  std::sort(sorted.begin(), sorted.end());
  const double mean =
      std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  return std::clamp(mean, sorted.front(), sorted.back());
}

BiasReport aggregate_column(const std::vector<ChatTurn>& turns) {
  std::vector<SentenceAnalysis> merged;
  for (const auto& turn : turns) {
    if (turn.role() != Role::Assistant || !turn.bias_report()) continue;
    const auto& s = turn.bias_report()->sentences;
    merged.insert(merged.end(), s.begin(), s.end());
  }
  return aggregate(std::move(merged));
}

std::pair<BiasReport, BiasReport> aggregate_session(const std::vector<ChatTurn>& column_a,
                                                    const std::vector<ChatTurn>& column_b) {
  return {aggregate_column(column_a), aggregate_column(column_b)};
}

}  // namespace biasscope
