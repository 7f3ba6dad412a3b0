#pragma once

// Normalization of heterogeneous classifier outputs into one bias score, and
// the CrowS-Pairs pair-preference / stereotype-score arithmetic built on it.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "biasscope/core_model.hpp"

namespace biasscope {

struct LabelScore {
  std::string label;
  double score = 0.0;

  friend bool operator==(const LabelScore&, const LabelScore&) = default;
};

/// Flattened classifier output: at least one entry, scores in [0, 1].
class RawClassifierOutput {
 public:
  explicit RawClassifierOutput(std::vector<LabelScore> entries);

  const std::vector<LabelScore>& entries() const noexcept { return entries_; }

 private:
  std::vector<LabelScore> entries_;
};

/// Accepts the three shapes inference endpoints return:
///   {"label": "...", "score": s}
///   [{"label": ..., "score": ...}, ...]
///   [[{"label": ..., "score": ...}, ...]]
/// Anything nested deeper, or missing label/score, throws DecodeError.
RawClassifierOutput decode_classifier_output(const Json& body);

enum class LabelPolarity { Positive, Negative, Unknown };

std::string_view to_string(LabelPolarity p);

/// Label → polarity lookup. Matching ignores case and treats '_', '-' and ' '
/// as the same character.
class PolarityTable {
 public:
  /// biased/toxic/hate/hateful/label_1 are positive;
  /// unbiased/non_biased/non_toxic/nothate/neutral/label_0 are negative.
  static const PolarityTable& defaults();

  /// Adds `label,polarity` lines (polarity is positive or negative; '#'
  /// comments and blank lines ignored) on top of the current table.
  /// Throws ConfigError naming the line on malformed input.
  void load_overrides(std::string_view contents);
  void load_overrides_file(const std::filesystem::path& path);

  void set(std::string_view label, LabelPolarity polarity);
  LabelPolarity lookup(std::string_view label) const;

  static std::string canonical_label(std::string_view label);

 private:
  std::map<std::string, LabelPolarity, std::less<>> table_;
};

LabelPolarity label_polarity(std::string_view label);

/// Maximum score over positive entries when any exist, otherwise
/// 1 - (maximum score over negative entries). Throws AllLabelsUnknown when no
/// entry has a known polarity.
BiasScore normalize(const RawClassifierOutput& output,
                    const PolarityTable& table = PolarityTable::defaults());

/// True iff the stereotypical sentence scores strictly higher.
inline bool pair_preference(BiasScore score_more, BiasScore score_less) {
  return score_more.value() > score_less.value();
}

/// 100 * preferred / total. Throws EmptyInput when total is zero.
double stereotype_score(std::size_t preferred, std::size_t total);
double stereotype_score(const std::vector<bool>& preferences);

/// Fixed two-decimal rendering used by every report ("69.30").
std::string format_percentage(double pct);

}  // namespace biasscope
