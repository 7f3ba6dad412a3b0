#include "biasscope/inference_client.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "http_client.hpp"
#include "parallel.hpp"

namespace biasscope {

namespace detail {

std::unique_ptr<httplib::Client> make_client(const ParsedUrl& url,
                                             std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(url.origin());
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  client->set_keep_alive(true);
  return client;
}

}  // namespace detail

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<double> parse_weight(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  // from_chars for double is missing on older libstdc++; strtod needs a terminated copy.
  std::string copy(s);
  char* end = nullptr;
  const double v = std::strtod(copy.c_str(), &end);
  if (end != copy.c_str() + copy.size()) return std::nullopt;
  return v;
}

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u == '_' || u >= 0x80;
}

bool occurs_as_word(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_byte(haystack[pos - 1]) || !is_word_byte(needle.front());
    const std::size_t after = pos + needle.size();
    const bool right_ok =
        after == haystack.size() || !is_word_byte(haystack[after]) || !is_word_byte(needle.back());
    if (left_ok && right_ok) return true;
  }
  return false;
}

InferenceFailure failure(FailureKind kind, std::string message, int status = 0) {
  return InferenceFailure{kind, status, std::move(message)};
}

template <class T, class Fn>
std::vector<Outcome<T>> run_batch(const std::vector<std::string>& items, std::size_t max_in_flight,
                                  Deadline deadline, Fn call) {
  std::vector<Outcome<T>> results(items.size(), failure(FailureKind::BudgetExceeded,
                                                        "analysis budget exceeded"));
  detail::parallel_for(items.size(), max_in_flight, [&](std::size_t i) {
    if (deadline && std::chrono::steady_clock::now() >= *deadline) return;
    results[i] = call(items[i]);
  });
  return results;
}

}  // namespace

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::Timeout: return "timeout";
    case FailureKind::HttpError: return "http_error";
    case FailureKind::Unreachable: return "unreachable";
    case FailureKind::DecodeError: return "decode_error";
    case FailureKind::AllLabelsUnknown: return "all_labels_unknown";
    case FailureKind::BudgetExceeded: return "budget_exceeded";
  }
  return "unreachable";
}

void EndpointConfig::validate() const {
  parse_url(url);
  if (timeout.count() <= 0) throw ConfigError("timeout", 0, "endpoint timeout must be positive");
  if (max_retries < 0) throw ConfigError("max_retries", 0, "max_retries must be >= 0");
  if (backoff_base.count() < 0) throw ConfigError("backoff_base", 0, "backoff_base must be >= 0");
}

bool RetryPolicy::is_retryable(const InferenceFailure& f) {
  if (f.kind == FailureKind::Timeout) return true;
  if (f.kind == FailureKind::HttpError) return f.http_status == 429 || f.http_status >= 500;
  return false;
}

std::chrono::milliseconds RetryPolicy::backoff(int retry, std::mt19937& rng) const {
  const long long base = backoff_base.count();
  const long long cap = 4 * base;
  long long delay = base;
  for (int i = 0; i < retry && delay < cap; ++i) delay *= 2;
  delay = std::min(delay, cap);
  if (delay <= 0) return std::chrono::milliseconds(0);
  std::uniform_int_distribution<long long> jitter(delay / 2, delay);
  return std::chrono::milliseconds(jitter(rng));
}

// ---------------------------------------------------------------------------
// Mock lexicon

MockLexiconBackend::MockLexiconBackend(std::vector<Term> terms, double floor)
    : terms_(std::move(terms)), floor_(floor) {
  BiasScore check(floor);
  (void)check;
  for (auto& t : terms_) {
    t.term = to_lower(t.term);
    BiasScore weight(t.weight);
    (void)weight;
    if (t.type_tag.empty()) t.type_tag = kDefaultTag;
  }
}

MockLexiconBackend MockLexiconBackend::parse(std::string_view contents) {
  std::vector<Term> terms;
  double floor = kDefaultFloor;
  std::istringstream in{std::string(contents)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto bad = [&](const std::string& why) {
      return ConfigError("lexicon", line_no, "lexicon line " + std::to_string(line_no) + ": " + why);
    };
    const auto last = line.rfind(':');
    if (last == std::string_view::npos) throw bad("expected term:weight[:type_tag]");
    std::string_view term;
    std::optional<double> weight;
    std::string tag;
    if (auto w = parse_weight(line.substr(last + 1))) {
      term = trim(line.substr(0, last));
      weight = w;
    } else {
      tag = std::string(trim(line.substr(last + 1)));
      const std::string_view rest = line.substr(0, last);
      const auto mid = rest.rfind(':');
      if (mid == std::string_view::npos) throw bad("missing weight");
      weight = parse_weight(rest.substr(mid + 1));
      if (!weight) throw bad("weight is not a number");
      term = trim(rest.substr(0, mid));
    }
    if (term.empty()) throw bad("empty term");
    if (!std::isfinite(*weight) || *weight < 0.0 || *weight > 1.0)
      throw bad("weight must lie in [0,1]");
    if (term == "*") {
      floor = *weight;
      continue;
    }
    terms.push_back(Term{std::string(term), *weight, tag});
  }
  return MockLexiconBackend(std::move(terms), floor);
}

MockLexiconBackend MockLexiconBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot read lexicon " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const MockLexiconBackend::Term* MockLexiconBackend::best_match(std::string_view sentence) const {
  const std::string lowered = to_lower(sentence);
  const Term* best = nullptr;
  for (const auto& t : terms_) {
    if ((best == nullptr || t.weight > best->weight) && occurs_as_word(lowered, t.term)) best = &t;
  }
  return best;
}

BiasScore MockLexiconBackend::detect(std::string_view sentence) const {
  const Term* best = best_match(sentence);
  return BiasScore(best ? best->weight : floor_);
}

BiasTypeDistribution MockLexiconBackend::classify_type(std::string_view sentence) const {
  const Term* best = best_match(sentence);
  return BiasTypeDistribution::single(best ? best->type_tag : kDefaultTag);
}

std::string MockLexiconBackend::describe() const {
  return "mock-lexicon(" + std::to_string(terms_.size()) + " terms)";
}

// ---------------------------------------------------------------------------
// Remote endpoint

RemoteBackend::RemoteBackend(EndpointConfig config, PolarityTable polarity, Sleeper sleeper)
    : config_(std::move(config)), polarity_(std::move(polarity)), sleeper_(std::move(sleeper)) {
  config_.validate();
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  pool_ = std::make_shared<detail::HttpPool>(parse_url(config_.url), config_.timeout);
}

RemoteBackend::~RemoteBackend() = default;

Json RemoteBackend::post_with_retries(std::string_view sentence) const {
  const std::string body = Json{{"inputs", sentence}}.dump();
  httplib::Headers headers{{"Accept", "application/json"}};
  if (config_.auth_token && !config_.auth_token->empty())
    headers.emplace("Authorization", "Bearer " + *config_.auth_token);

  const RetryPolicy policy{config_.max_retries, config_.backoff_base};
  thread_local std::mt19937 rng{std::random_device{}()};
  InferenceFailure last;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(policy.backoff(attempt - 1, rng));
    auto client = pool_->acquire();
    auto res = client->Post(pool_->url().path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             err == httplib::Error::Read || err == httplib::Error::Write;
      last = failure(timed_out ? FailureKind::Timeout : FailureKind::Unreachable,
                     "endpoint request failed: " + httplib::to_string(err));
    } else if (res->status < 200 || res->status >= 300) {
      last = failure(FailureKind::HttpError,
                     "endpoint returned HTTP " + std::to_string(res->status), res->status);
    } else {
      try {
        return Json::parse(res->body);
      } catch (const Json::parse_error&) {
        throw InferenceError(failure(FailureKind::DecodeError, "endpoint body is not JSON"));
      }
    }
    if (!RetryPolicy::is_retryable(last)) break;
  }
  throw InferenceError(last);
}

BiasScore RemoteBackend::detect(std::string_view sentence) const {
  const Json body = post_with_retries(sentence);
  try {
    return normalize(decode_classifier_output(body), polarity_);
  } catch (const DecodeError& e) {
    throw InferenceError(failure(FailureKind::DecodeError, e.what()));
  } catch (const AllLabelsUnknown& e) {
    throw InferenceError(failure(FailureKind::AllLabelsUnknown, e.what()));
  }
}

BiasTypeDistribution RemoteBackend::classify_type(std::string_view sentence) const {
  const Json body = post_with_retries(sentence);
  try {
    const RawClassifierOutput raw = decode_classifier_output(body);
    std::vector<TypeProbability> entries;
    entries.reserve(raw.entries().size());
    for (const auto& e : raw.entries()) entries.push_back(TypeProbability{e.label, e.score});
    return BiasTypeDistribution(std::move(entries));
  } catch (const Error& e) {
    throw InferenceError(failure(FailureKind::DecodeError, e.what()));
  }
}

bool RemoteBackend::probe() const {
  auto client = detail::make_client(pool_->url(), std::chrono::milliseconds(2000));
  auto res = client->Get(pool_->url().path);
  return static_cast<bool>(res);
}

std::string RemoteBackend::describe() const { return "remote(" + pool_->url().origin() + ")"; }

std::shared_ptr<const Backend> make_backend(const BackendSpec& spec) {
  if (const auto* remote = std::get_if<EndpointConfig>(&spec))
    return std::make_shared<RemoteBackend>(*remote);
  return std::make_shared<MockLexiconBackend>(
      MockLexiconBackend::from_file(std::get<MockLexiconPath>(spec).path));
}

Outcome<BiasScore> try_detect(const Backend& backend, std::string_view sentence) {
  try {
    return backend.detect(sentence);
  } catch (const InferenceError& e) {
    return e.failure();
  } catch (const std::exception& e) {
    return failure(FailureKind::DecodeError, e.what());
  }
}

Outcome<BiasTypeDistribution> try_classify(const Backend& backend, std::string_view sentence) {
  try {
    return backend.classify_type(sentence);
  } catch (const InferenceError& e) {
    return e.failure();
  } catch (const std::exception& e) {
    return failure(FailureKind::DecodeError, e.what());
  }
}

std::vector<Outcome<BiasScore>> detect_batch(const Backend& backend,
                                             const std::vector<std::string>& sentences,
                                             std::size_t max_in_flight, Deadline deadline) {
  return run_batch<BiasScore>(sentences, max_in_flight, deadline,
                              [&](const std::string& s) { return try_detect(backend, s); });
}

std::vector<Outcome<BiasTypeDistribution>> classify_batch(const Backend& backend,
                                                          const std::vector<std::string>& sentences,
                                                          std::size_t max_in_flight,
                                                          Deadline deadline) {
  return run_batch<BiasTypeDistribution>(
      sentences, max_in_flight, deadline,
      [&](const std::string& s) { return try_classify(backend, s); });
}

}  // namespace biasscope
