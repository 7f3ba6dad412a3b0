#pragma once

// Two-stage analysis: segment, detect every sentence, classify the type of
// each biased sentence, aggregate.

#include <chrono>
#include <cstddef>
#include <memory>
#include <string_view>
#include <vector>

#include "biasscope/core_model.hpp"
#include "biasscope/inference_client.hpp"
#include "biasscope/segmenter.hpp"

namespace biasscope {

struct PipelineConfig {
  std::shared_ptr<const Backend> detector;
  std::shared_ptr<const Backend> classifier;
  std::shared_ptr<const Segmenter> segmenter;  // builtin rules when null
  std::size_t max_in_flight = kDefaultMaxInFlight;
  /// Wall-clock budget for one text; sentences not reached in time are
  /// marked DetectionFailed (or ClassificationFailed in stage two).
  std::chrono::milliseconds budget{60000};
};

/// Never throws for backend trouble: failures become per-sentence statuses.
/// A missing detector fails every sentence, a missing classifier fails every
/// classification.
BiasReport analyze(std::string_view text, const PipelineConfig& config);

BiasReport aggregate(std::vector<SentenceAnalysis> analyses);

/// 100 * bias_ratio.
inline double bias_percentage(const BiasReport& report) { return 100.0 * report.bias_ratio; }

}  // namespace biasscope
