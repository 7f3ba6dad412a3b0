#pragma once

// Benchmark harness: CrowS-Pairs stereotype scores, BABE binary metrics and
// pipeline latency.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "biasscope/core_model.hpp"
#include "biasscope/inference_client.hpp"
#include "biasscope/pipeline.hpp"

namespace biasscope {

inline constexpr const char* kEvalSchema = "biasscope-eval/1";

class DatasetError : public Error {
 public:
  enum class Kind { Unreadable, MissingColumn, MalformedRow, UnknownLabel };

  DatasetError(Kind kind, std::size_t line, const std::string& what)
      : Error(what), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  /// 1-based line of the offending row, 0 when not tied to a row.
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

class EmptyMatrix : public EmptyInput {
 public:
  using EmptyInput::EmptyInput;
};

// ---------------------------------------------------------------------------
// CrowS-Pairs

struct CrowsPair {
  std::string sent_more;
  std::string sent_less;
  std::string bias_type;

  friend bool operator==(const CrowsPair&, const CrowsPair&) = default;
};

/// CSV with at least sent_more, sent_less and bias_type columns; other
/// columns are ignored.
std::vector<CrowsPair> parse_crows(std::string_view csv_text);
std::vector<CrowsPair> load_crows(const std::filesystem::path& path);

struct TypeStereotypeScore {
  std::string bias_type;
  std::size_t pairs = 0;      // evaluated pairs of this type
  std::size_t preferred = 0;
  std::size_t failed = 0;
  double ss = 0.0;
};

struct CrowsReport {
  std::size_t total_pairs = 0;
  std::size_t evaluated_pairs = 0;
  std::size_t failed_pairs = 0;
  std::size_t preferred_pairs = 0;
  double ss = 0.0;  // 0 when nothing could be evaluated
  double mean_latency_s = 0.0;
  /// Ordered by descending pair count, then type name.
  std::vector<TypeStereotypeScore> per_type;
};

/// Seconds on a monotonic clock.
using SecondsClock = std::function<double()>;
double steady_seconds();

/// Scores both sentences of each pair, counts strict preferences, and times
/// each pair. Pairs whose detection fails are excluded from every SS.
CrowsReport run_crows(const std::vector<CrowsPair>& pairs, const Backend& detector,
                      std::size_t max_in_flight = 1, const SecondsClock& clock = steady_seconds);

// ---------------------------------------------------------------------------
// BABE

enum class GoldLabel { Biased, Unbiased };

struct BabeExample {
  std::string text;
  GoldLabel gold = GoldLabel::Unbiased;

  friend bool operator==(const BabeExample&, const BabeExample&) = default;
};

/// Delimited text (',', tab or ';', sniffed from the header) with `text` and
/// `label` (or `label_bias`) columns. Labels: biased/1 and
/// non-biased/unbiased/0, case-insensitive.
std::vector<BabeExample> parse_babe(std::string_view text);
std::vector<BabeExample> load_babe(const std::filesystem::path& path);

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Percentages. A zero denominator yields 0 and sets the matching flag.
struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

/// Throws EmptyMatrix when every cell is zero.
BinaryMetrics compute_metrics(const ConfusionMatrix& m);

/// Harmonic mean of two percentages; 0 when both are 0.
double f1_from(double precision_pct, double recall_pct);

struct BabeReport {
  double threshold = kBiasThreshold;
  std::size_t total = 0;
  std::size_t failed = 0;
  ConfusionMatrix matrix;
  BinaryMetrics metrics;
};

/// Predicts Biased iff score > threshold. Failed detections are left out of
/// the matrix and counted in `failed`. Throws InvariantError when threshold
/// is outside [0, 1], EmptyInput when `examples` is empty.
BabeReport run_babe(const std::vector<BabeExample>& examples, const Backend& detector,
                    double threshold = kBiasThreshold, std::size_t max_in_flight = 1);

// ---------------------------------------------------------------------------
// Latency

struct LatencySummary {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation, 0 for n == 1
};

struct LatencyStats {
  std::size_t n = 0;
  std::size_t failures = 0;
  double success_rate = 0.0;
  std::optional<LatencySummary> summary;  // absent when nothing succeeded
};

/// Throws EmptyInput when there are neither samples nor failures.
LatencyStats latency_stats(std::vector<double> samples, std::size_t failures);

struct BenchCase {
  std::string name;
  std::string text;
};

/// Four length categories: 1 sentence / 6 words, 3 / 15, 10 / 63, 20 / 83.
std::vector<BenchCase> builtin_bench_cases();
/// JSON array of {"name", "text"} objects.
std::vector<BenchCase> load_bench_cases(const std::filesystem::path& path);

struct BenchResult {
  BenchCase bench_case;
  std::size_t sentences = 0;
  std::size_t words = 0;
  LatencyStats stats;
};

/// Runs analyze() `trials` times per case, strictly one after another. A
/// trial succeeds when no sentence failed detection.
std::vector<BenchResult> run_latency_bench(const std::vector<BenchCase>& cases, std::size_t trials,
                                           const PipelineConfig& config,
                                           const SecondsClock& clock = steady_seconds);

// ---------------------------------------------------------------------------
// Reports

Json to_json(const CrowsReport& r);
Json to_json(const BabeReport& r);
Json bench_to_json(const std::vector<BenchResult>& results, std::size_t trials);

std::string format_table(const CrowsReport& r);
std::string format_table(const BabeReport& r);
std::string format_bench_table(const std::vector<BenchResult>& results);

}  // namespace biasscope
