#pragma once

// Bias-detection and bias-type-classification backends: remote inference
// endpoints over HTTP and a deterministic lexicon mock for offline use.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biasscope/core_model.hpp"
#include "biasscope/normalizer.hpp"

namespace biasscope {

enum class FailureKind {
  Timeout,
  HttpError,
  Unreachable,
  DecodeError,
  AllLabelsUnknown,
  BudgetExceeded,
};

std::string_view to_string(FailureKind kind);

struct InferenceFailure {
  FailureKind kind = FailureKind::Unreachable;
  int http_status = 0;
  std::string message;

  friend bool operator==(const InferenceFailure&, const InferenceFailure&) = default;
};

class InferenceError : public Error {
 public:
  explicit InferenceError(InferenceFailure failure)
      : Error(failure.message), failure_(std::move(failure)) {}

  const InferenceFailure& failure() const noexcept { return failure_; }

 private:
  InferenceFailure failure_;
};

template <class T>
using Outcome = std::variant<T, InferenceFailure>;

struct EndpointConfig {
  std::string url;
  std::optional<std::string> auth_token;
  std::chrono::milliseconds timeout{10000};
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{250};

  /// Throws ConfigError for a malformed URL, non-positive timeout or negative
  /// retry count.
  void validate() const;
};

/// Attempts are capped at 1 + max_retries. Only timeouts, HTTP 5xx and HTTP
/// 429 are retried.
struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{250};

  static bool is_retryable(const InferenceFailure& failure);
  /// Exponential backoff capped at 4 * backoff_base, jittered into
  /// [delay / 2, delay]. `retry` counts from 0.
  std::chrono::milliseconds backoff(int retry, std::mt19937& rng) const;
};

/// Shared, thread-safe handle to one detection/classification service.
/// Failures are reported by throwing InferenceError.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BiasScore detect(std::string_view sentence) const = 0;
  virtual BiasTypeDistribution classify_type(std::string_view sentence) const = 0;
  /// Cheap reachability check.
  virtual bool probe() const = 0;
  virtual std::string describe() const = 0;
};

/// Lexicon lines are `term:weight[:type_tag]`; '#' starts a comment. A term
/// of `*` sets the score used when nothing matches (default 0.05).
class MockLexiconBackend final : public Backend {
 public:
  struct Term {
    std::string term;  // lowercase
    double weight = 0.0;
    std::string type_tag;
  };

  static constexpr double kDefaultFloor = 0.05;
  static constexpr const char* kDefaultTag = "generalization";

  /// Throws ConfigError naming the line on malformed input.
  static MockLexiconBackend parse(std::string_view contents);
  static MockLexiconBackend from_file(const std::filesystem::path& path);

  explicit MockLexiconBackend(std::vector<Term> terms, double floor = kDefaultFloor);

  /// Max weight over terms occurring as whole words in the lowercased
  /// sentence, or the floor when none match.
  BiasScore detect(std::string_view sentence) const override;
  /// Probability 1.0 on the tag of the highest-weight matched term.
  BiasTypeDistribution classify_type(std::string_view sentence) const override;
  bool probe() const override { return true; }
  std::string describe() const override;

  const std::vector<Term>& terms() const noexcept { return terms_; }
  double floor() const noexcept { return floor_; }

 private:
  const Term* best_match(std::string_view sentence) const;

  std::vector<Term> terms_;
  double floor_;
};

namespace detail {
class HttpPool;
}

/// Remote inference endpoint. Requests are `POST {"inputs": text}` with an
/// optional bearer token; responses use any shape accepted by
/// decode_classifier_output().
class RemoteBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit RemoteBackend(EndpointConfig config,
                         PolarityTable polarity = PolarityTable::defaults(),
                         Sleeper sleeper = {});
  ~RemoteBackend() override;

  BiasScore detect(std::string_view sentence) const override;
  BiasTypeDistribution classify_type(std::string_view sentence) const override;
  bool probe() const override;
  std::string describe() const override;

  const EndpointConfig& config() const noexcept { return config_; }

 private:
  Json post_with_retries(std::string_view sentence) const;

  EndpointConfig config_;
  PolarityTable polarity_;
  Sleeper sleeper_;
  std::shared_ptr<detail::HttpPool> pool_;
};

struct MockLexiconPath {
  std::filesystem::path path;
};

/// Which backend to build: a remote endpoint or a lexicon file.
using BackendSpec = std::variant<EndpointConfig, MockLexiconPath>;

std::shared_ptr<const Backend> make_backend(const BackendSpec& spec);

inline constexpr std::size_t kDefaultMaxInFlight = 8;

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

Outcome<BiasScore> try_detect(const Backend& backend, std::string_view sentence);
Outcome<BiasTypeDistribution> try_classify(const Backend& backend, std::string_view sentence);

/// Runs detect on every sentence with at most `max_in_flight` concurrent
/// calls. Results are in input order and failures stay per item. Items not
/// started by `deadline` fail with BudgetExceeded.
std::vector<Outcome<BiasScore>> detect_batch(const Backend& backend,
                                             const std::vector<std::string>& sentences,
                                             std::size_t max_in_flight = kDefaultMaxInFlight,
                                             Deadline deadline = std::nullopt);

std::vector<Outcome<BiasTypeDistribution>> classify_batch(
    const Backend& backend, const std::vector<std::string>& sentences,
    std::size_t max_in_flight = kDefaultMaxInFlight, Deadline deadline = std::nullopt);

}  // namespace biasscope
