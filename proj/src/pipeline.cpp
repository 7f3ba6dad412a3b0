#include "biasscope/pipeline.hpp"

#include <algorithm>
#include <numeric>

namespace biasscope {

BiasReport analyze(std::string_view text, const PipelineConfig& config) {
  const std::vector<Sentence> sentences =
      config.segmenter ? config.segmenter->segment(text) : segment(text);
  if (sentences.empty()) return BiasReport{};

  const auto deadline = std::chrono::steady_clock::now() + config.budget;
  std::vector<std::string> texts;
  texts.reserve(sentences.size());
  for (const auto& s : sentences) texts.push_back(s.text);

  std::vector<Outcome<BiasScore>> scores;
  if (config.detector) {
    scores = detect_batch(*config.detector, texts, config.max_in_flight, deadline);
  } else {
    scores.assign(texts.size(),
                  InferenceFailure{FailureKind::Unreachable, 0, "no detector configured"});
  }

  // Stage two only for sentences scoring above the threshold.
  std::vector<std::size_t> biased_idx;
  std::vector<std::string> biased_texts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (const auto* s = std::get_if<BiasScore>(&scores[i]); s && s->is_biased()) {
      biased_idx.push_back(i);
      biased_texts.push_back(texts[i]);
    }
  }
  std::vector<Outcome<BiasTypeDistribution>> types;
  if (!biased_texts.empty()) {
    if (config.classifier) {
      types = classify_batch(*config.classifier, biased_texts, config.max_in_flight, deadline);
    } else {
      types.assign(biased_texts.size(),
                   InferenceFailure{FailureKind::Unreachable, 0, "no classifier configured"});
    }
  }

  std::vector<SentenceAnalysis> analyses;
  analyses.reserve(sentences.size());
  std::size_t next_biased = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto* score = std::get_if<BiasScore>(&scores[i]);
    if (score == nullptr) {
      analyses.push_back(SentenceAnalysis::detection_failed(sentences[i]));
    } else if (!score->is_biased()) {
      analyses.push_back(SentenceAnalysis::ok(sentences[i], *score));
    } else {
      const auto& type = types[next_biased++];
      if (const auto* dist = std::get_if<BiasTypeDistribution>(&type)) {
        analyses.push_back(SentenceAnalysis::ok(sentences[i], *score, *dist));
      } else {
        analyses.push_back(SentenceAnalysis::classification_failed(sentences[i], *score));
      }
    }
  }
  return aggregate(std::move(analyses));
}

BiasReport aggregate(std::vector<SentenceAnalysis> analyses) {
  BiasReport r;
  r.total_sentences = analyses.size();
  std::vector<double> detected;
  detected.reserve(analyses.size());
  for (const auto& a : analyses) {
    if (!a.score()) {
      ++r.failed_count;
      continue;
    }
    detected.push_back(a.score()->value());
    if (a.is_biased()) ++r.biased_count;
    if (a.bias_type()) ++r.type_counts[a.bias_type()->top_label()];
  }
  if (!detected.empty()) {
    // Sorted summation keeps the mean independent of sentence order.
    std::sort(detected.begin(), detected.end());
    const double sum = std::accumulate(detected.begin(), detected.end(), 0.0);
    r.avg_bias_score = std::clamp(sum / static_cast<double>(detected.size()), 0.0, 1.0);
    r.bias_ratio = static_cast<double>(r.biased_count) / static_cast<double>(detected.size());
  }
  r.sentences = std::move(analyses);
  return r;
}

}  // namespace biasscope
