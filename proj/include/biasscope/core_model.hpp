#pragma once

// Shared domain types. Every type is an immutable value once constructed and
// serializes to the canonical snake_case JSON used on the wire and in exports.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "biasscope/errors.hpp"

namespace biasscope {

using Json = nlohmann::json;

/// Scores strictly above this value are biased; exactly 0.5 is unbiased.
inline constexpr double kBiasThreshold = 0.5;

/// Probability of the "biased" class, always finite and within [0, 1].
class BiasScore {
 public:
  /// Throws InvariantError for values outside [0, 1] or non-finite values.
  explicit BiasScore(double value);

  double value() const noexcept { return value_; }
  bool is_biased() const noexcept { return value_ > kBiasThreshold; }

  friend bool operator==(const BiasScore&, const BiasScore&) = default;

 private:
  double value_;
};

/// A span of a source text. Offsets are UTF-8 byte offsets, `end` exclusive.
struct Sentence {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  /// Throws InvariantError unless start < end, end - start == text.size() and
  /// the text has a non-whitespace character.
  static Sentence make(std::string text, std::size_t start, std::size_t end);

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct TypeProbability {
  std::string label;
  double probability = 0.0;

  friend bool operator==(const TypeProbability&, const TypeProbability&) = default;
};

/// Distribution over bias-type labels. Labels are open strings.
class BiasTypeDistribution {
 public:
  /// Entries must be non-empty with unique labels and probabilities in [0, 1].
  explicit BiasTypeDistribution(std::vector<TypeProbability> entries);

  /// Probability 1.0 on a single label.
  static BiasTypeDistribution single(std::string label);

  const std::vector<TypeProbability>& entries() const noexcept { return entries_; }
  /// Label of the maximum-probability entry; ties go to the lexicographically
  /// smallest label.
  const std::string& top_label() const noexcept { return top_label_; }

  friend bool operator==(const BiasTypeDistribution&, const BiasTypeDistribution&) = default;

 private:
  std::vector<TypeProbability> entries_;
  std::string top_label_;
};

enum class AnalysisStatus { Ok, DetectionFailed, ClassificationFailed };

std::string_view to_string(AnalysisStatus status);

class SentenceAnalysis {
 public:
  /// Detection succeeded. `bias_type` may only be given for biased scores.
  static SentenceAnalysis ok(Sentence sentence, BiasScore score,
                             std::optional<BiasTypeDistribution> bias_type = std::nullopt);
  static SentenceAnalysis detection_failed(Sentence sentence);
  /// Detection succeeded with a biased score but type classification failed.
  static SentenceAnalysis classification_failed(Sentence sentence, BiasScore score);

  const Sentence& sentence() const noexcept { return sentence_; }
  const std::optional<BiasScore>& score() const noexcept { return score_; }
  bool is_biased() const noexcept { return score_ && score_->is_biased(); }
  const std::optional<BiasTypeDistribution>& bias_type() const noexcept { return bias_type_; }
  AnalysisStatus status() const noexcept { return status_; }

  friend bool operator==(const SentenceAnalysis&, const SentenceAnalysis&) = default;

 private:
  SentenceAnalysis(Sentence sentence, std::optional<BiasScore> score,
                   std::optional<BiasTypeDistribution> bias_type, AnalysisStatus status)
      : sentence_(std::move(sentence)),
        score_(score),
        bias_type_(std::move(bias_type)),
        status_(status) {}

  Sentence sentence_;
  std::optional<BiasScore> score_;
  std::optional<BiasTypeDistribution> bias_type_;
  AnalysisStatus status_;
};

/// Aggregated statistics for one analyzed text. Produce these with
/// `aggregate()`; `validate()` checks the arithmetic invariants of reports
/// that arrive from elsewhere.
struct BiasReport {
  std::size_t total_sentences = 0;
  std::size_t biased_count = 0;
  std::size_t failed_count = 0;
  double bias_ratio = 0.0;
  double avg_bias_score = 0.0;
  std::map<std::string, std::size_t> type_counts;
  std::vector<SentenceAnalysis> sentences;

  /// Throws InvariantError when counts, ratio or type counts are inconsistent.
  void validate() const;

  friend bool operator==(const BiasReport&, const BiasReport&) = default;
};

struct ProviderModel {
  std::string provider_id;
  std::string model_id;
  std::string display_name;

  /// Throws InvariantError when provider_id or model_id is empty. An empty
  /// display name defaults to "provider/model".
  static ProviderModel make(std::string provider_id, std::string model_id,
                            std::string display_name = {});

  friend bool operator==(const ProviderModel&, const ProviderModel&) = default;
};

struct ComparisonReport {
  ProviderModel model_a;
  ProviderModel model_b;
  BiasReport report_a;
  BiasReport report_b;
  double delta_bias_pct = 0.0;   // percentage points, A minus B
  double delta_avg_score = 0.0;  // A minus B
  std::map<std::string, long long> type_deltas;

  friend bool operator==(const ComparisonReport&, const ComparisonReport&) = default;
};

enum class Role { User, Assistant, System };

std::string_view to_string(Role role);

class ChatTurn {
 public:
  static ChatTurn user(std::string content, std::optional<BiasReport> report = std::nullopt);
  static ChatTurn system(std::string content);
  static ChatTurn assistant(std::string content, ProviderModel model,
                            std::optional<BiasReport> report = std::nullopt);

  Role role() const noexcept { return role_; }
  const std::string& content() const noexcept { return content_; }
  const std::optional<ProviderModel>& model() const noexcept { return model_; }
  const std::optional<BiasReport>& bias_report() const noexcept { return bias_report_; }

  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;

 private:
  ChatTurn(Role role, std::string content, std::optional<ProviderModel> model,
           std::optional<BiasReport> report)
      : role_(role),
        content_(std::move(content)),
        model_(std::move(model)),
        bias_report_(std::move(report)) {}

  Role role_;
  std::string content_;
  std::optional<ProviderModel> model_;
  std::optional<BiasReport> bias_report_;
};

// Canonical JSON. Deserialization re-checks every invariant and throws
// InvariantError (or nlohmann's type errors for structurally wrong input).

void to_json(Json& j, const BiasScore& v);
void to_json(Json& j, const Sentence& v);
void to_json(Json& j, const BiasTypeDistribution& v);
void to_json(Json& j, const SentenceAnalysis& v);
void to_json(Json& j, const BiasReport& v);
void to_json(Json& j, const ProviderModel& v);
void to_json(Json& j, const ComparisonReport& v);
void to_json(Json& j, const ChatTurn& v);

BiasScore bias_score_from_json(const Json& j);
Sentence sentence_from_json(const Json& j);
BiasTypeDistribution bias_type_from_json(const Json& j);
SentenceAnalysis sentence_analysis_from_json(const Json& j);
BiasReport bias_report_from_json(const Json& j);
ProviderModel provider_model_from_json(const Json& j);
ComparisonReport comparison_report_from_json(const Json& j);
ChatTurn chat_turn_from_json(const Json& j);

Role role_from_string(std::string_view s);

}  // namespace biasscope
