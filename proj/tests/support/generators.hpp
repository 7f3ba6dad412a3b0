#pragma once

// Random values for property tests. Every generator takes the engine so
// failures reproduce from the seed.

#include <random>
#include <string>
#include <vector>

#include "biasscope/core_model.hpp"
#include "biasscope/pipeline.hpp"

namespace biasscope::testing {

inline double uniform(std::mt19937& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(std::mt19937& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline const std::vector<std::string>& type_labels() {
  static const std::vector<std::string> labels{"stereotype", "gender", "race-color", "political",
                                               "generalization", "unfairness"};
  return labels;
}

inline SentenceAnalysis random_analysis(std::mt19937& rng, std::size_t& offset) {
  static const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "Zeta", "eta"};
  std::string text = words[pick(rng, words.size())] + " " + words[pick(rng, words.size())] + ".";
  Sentence s = Sentence::make(text, offset, offset + text.size());
  offset += text.size() + 1;
  const std::size_t kind = pick(rng, 10);
  if (kind == 0) return SentenceAnalysis::detection_failed(s);
  // Sprinkle in exact threshold hits.
  const BiasScore score(kind == 1 ? 0.5 : uniform(rng));
  if (score.is_biased() && kind == 2) return SentenceAnalysis::classification_failed(s, score);
  if (!score.is_biased()) return SentenceAnalysis::ok(s, score);
  std::vector<TypeProbability> entries;
  const std::size_t n = 1 + pick(rng, 3);
  for (std::size_t i = 0; i < n; ++i) entries.push_back({type_labels()[i * 2 % 6], uniform(rng)});
  return SentenceAnalysis::ok(s, score, BiasTypeDistribution(entries));
}

inline std::vector<SentenceAnalysis> random_analyses(std::mt19937& rng, std::size_t max_n = 12) {
  std::vector<SentenceAnalysis> out;
  std::size_t offset = 0;
  const std::size_t n = pick(rng, max_n + 1);
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_analysis(rng, offset));
  return out;
}

inline BiasReport random_report(std::mt19937& rng, std::size_t max_n = 12) {
  return aggregate(random_analyses(rng, max_n));
}

}  // namespace biasscope::testing
