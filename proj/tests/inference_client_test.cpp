#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

#include "biasscope/inference_client.hpp"
#include "support/backends.hpp"
#include "support/local_server.hpp"

using namespace biasscope;
using namespace std::chrono_literals;
using biasscope::testing::LocalServer;

namespace {

RemoteBackend remote(const LocalServer& srv, int retries = 2, std::chrono::milliseconds timeout = 2000ms,
                     std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
  EndpointConfig cfg;
  cfg.url = srv.url("/detect");
  cfg.max_retries = retries;
  cfg.timeout = timeout;
  cfg.auth_token = "secret-token";
  return RemoteBackend(cfg, PolarityTable::defaults(), [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d);
  });
}

InferenceFailure failure_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InferenceError& e) {
    return e.failure();
  }
  FAIL("expected InferenceError");
  return {};
}

}  // namespace

TEST_CASE("mock lexicon examples") {
  const auto mock = MockLexiconBackend::parse("always:0.9\nlazy:0.95:stereotype\n");
  CHECK(mock.detect("They are always late.").value() == doctest::Approx(0.90));
  CHECK(mock.detect("The sky is blue.").value() == doctest::Approx(0.05));
  const auto t = mock.classify_type("Those people are lazy.");
  CHECK(t.top_label() == "stereotype");
  CHECK(t.entries().size() == 1);
  CHECK(t.entries()[0].probability == 1.0);
  CHECK(mock.classify_type("They are always late.").top_label() == "generalization");
}

TEST_CASE("mock lexicon matching rules") {
  const auto mock = MockLexiconBackend::parse("# c\nlazy:0.95:stereotype\nhard working:0.7:x\n*:0.2\n");
  CHECK(mock.floor() == doctest::Approx(0.2));
  CHECK(mock.detect("LAZY people").value() == doctest::Approx(0.95));
  CHECK(mock.detect("laziness is not a word match").value() == doctest::Approx(0.2));
  CHECK(mock.detect("they are hard working, truly").value() == doctest::Approx(0.7));
  CHECK(mock.detect("lazy, lazy").value() == doctest::Approx(0.95));
  CHECK(mock.detect("non-lazy").value() == doctest::Approx(0.95));
  // Equal weights resolve to the first term in the file.
  const auto tie = MockLexiconBackend::parse("a1:0.8:first\nb1:0.8:second\n");
  CHECK(tie.classify_type("b1 a1").top_label() == "first");
}

TEST_CASE("mock lexicon is deterministic") {
  const auto mock = MockLexiconBackend::from_file(BIASSCOPE_DATA "/mock_lexicon.txt");
  for (const char* s : {"Those people are lazy.", "Women are too emotional.", "Fine day."})
    CHECK(mock.detect(s) == mock.detect(s));
}

TEST_CASE("mock lexicon rejects bad lines") {
  for (const char* bad : {"lazy\n", "lazy:1.5\n", "lazy:abc\n", ":0.5\n", "ok:0.5\nx:-1\n"}) {
    try {
      MockLexiconBackend::parse(bad);
      FAIL("expected ConfigError for " << bad);
    } catch (const ConfigError& e) {
      CHECK(e.line() >= 1);
    }
  }
  try {
    MockLexiconBackend::parse("a:0.5\n\n# x\nb:2\n");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(MockLexiconBackend::from_file("/does/not/exist"), ConfigError);
}

TEST_CASE("endpoint config validation") {
  EndpointConfig cfg;
  cfg.url = "not a url";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.url = "http://localhost:1/x";
  cfg.timeout = 0ms;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.timeout = 10ms;
  cfg.max_retries = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.max_retries = 0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("retry classification and backoff") {
  CHECK(RetryPolicy::is_retryable({FailureKind::Timeout, 0, ""}));
  CHECK(RetryPolicy::is_retryable({FailureKind::HttpError, 503, ""}));
  CHECK(RetryPolicy::is_retryable({FailureKind::HttpError, 429, ""}));
  CHECK_FALSE(RetryPolicy::is_retryable({FailureKind::HttpError, 404, ""}));
  CHECK_FALSE(RetryPolicy::is_retryable({FailureKind::DecodeError, 0, ""}));
  CHECK_FALSE(RetryPolicy::is_retryable({FailureKind::AllLabelsUnknown, 0, ""}));
  const RetryPolicy p{5, 100ms};
  std::mt19937 rng(1);
  for (int i = 0; i < 200; ++i) {
    for (int k = 0; k < 5; ++k) {
      const auto full = std::min<long long>(100LL << k, 400);
      const auto d = p.backoff(k, rng).count();
      CHECK(d >= full / 2);
      CHECK(d <= full);
    }
  }
}

TEST_CASE("remote detect decodes and normalizes") {
  LocalServer srv;
  std::string seen_auth, seen_body;
  srv.http().Post("/detect", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(R"([[{"label":"unbiased","score":0.8},{"label":"x","score":0.1}]])",
                    "application/json");
  });
  srv.start();
  const auto b = remote(srv);
  CHECK(b.detect("They are lazy.").value() == doctest::Approx(0.2));
  CHECK(seen_auth == "Bearer secret-token");
  CHECK(Json::parse(seen_body) == Json{{"inputs", "They are lazy."}});
  CHECK(b.probe());
}

TEST_CASE("remote classify") {
  LocalServer srv;
  std::atomic<int> which{0};
  srv.http().Post("/detect", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(which++ == 0 ? R"([{"label":"political","score":0.7},{"label":"racial","score":0.3}])"
                                 : R"([{"label":"b","score":0.5},{"label":"a","score":0.5}])",
                    "application/json");
  });
  srv.start();
  const auto b = remote(srv);
  CHECK(b.classify_type("x").top_label() == "political");
  CHECK(b.classify_type("x").top_label() == "a");
}

TEST_CASE("remote retries 5xx and 429 up to the limit") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.http().Post("/detect", [&](const httplib::Request&, httplib::Response& res) {
    const int n = calls++;
    if (n == 0) res.status = 503;
    else if (n == 1) res.status = 429;
    else res.set_content(R"({"label":"biased","score":0.66})", "application/json");
  });
  srv.start();
  std::vector<std::chrono::milliseconds> sleeps;
  const auto b = remote(srv, 2, 2000ms, &sleeps);
  CHECK(b.detect("x").value() == doctest::Approx(0.66));
  CHECK(calls == 3);
  CHECK(sleeps.size() == 2);
}

TEST_CASE("remote gives up after max_retries + 1 attempts") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.http().Post("/detect", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 502;
  });
  srv.start();
  const auto b = remote(srv, 3);
  const auto f = failure_of([&] { b.detect("x"); });
  CHECK(f.kind == FailureKind::HttpError);
  CHECK(f.http_status == 502);
  CHECK(calls == 4);
}

TEST_CASE("remote never retries 4xx or decode errors") {
  LocalServer srv;
  std::atomic<int> calls{0};
  std::atomic<int> mode{0};
  srv.http().Post("/detect", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    if (mode == 0) res.status = 401;
    else if (mode == 1) res.set_content("<html>", "text/html");
    else if (mode == 2) res.set_content(R"({"label":"cheerful","score":0.9})", "application/json");
    else res.set_content(R"({"unexpected":true})", "application/json");
  });
  srv.start();
  const auto b = remote(srv, 3);
  auto f = failure_of([&] { b.detect("x"); });
  CHECK(f.kind == FailureKind::HttpError);
  CHECK(f.http_status == 401);
  CHECK(calls == 1);
  mode = 1;
  f = failure_of([&] { b.detect("x"); });
  CHECK(f.kind == FailureKind::DecodeError);
  CHECK(calls == 2);
  mode = 2;
  f = failure_of([&] { b.detect("x"); });
  CHECK(f.kind == FailureKind::AllLabelsUnknown);
  CHECK(calls == 3);
  mode = 3;
  f = failure_of([&] { b.detect("x"); });
  CHECK(f.kind == FailureKind::DecodeError);
  CHECK(calls == 4);
}

TEST_CASE("remote timeouts are retried") {
  LocalServer srv;
  std::atomic<int> calls{0};
  srv.http().Post("/detect", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) std::this_thread::sleep_for(400ms);
    res.set_content(R"({"label":"biased","score":0.9})", "application/json");
  });
  srv.start();
  const auto b = remote(srv, 1, 150ms);
  CHECK(b.detect("x").value() == doctest::Approx(0.9));
  CHECK(calls == 2);

  const auto once = remote(srv, 0, 150ms);
  calls = 0;
  const auto f = failure_of([&] { once.detect("x"); });
  CHECK(f.kind == FailureKind::Timeout);
}

TEST_CASE("unreachable endpoint") {
  LocalServer srv;
  srv.start();
  const std::string url = srv.url("/detect");
  srv.stop();
  EndpointConfig cfg;
  cfg.url = url;
  cfg.max_retries = 0;
  cfg.timeout = 500ms;
  const RemoteBackend b(cfg);
  const auto f = failure_of([&] { b.detect("x"); });
  CHECK(f.kind == FailureKind::Unreachable);
  CHECK_FALSE(b.probe());
  const auto outcome = try_detect(b, "x");
  CHECK(std::holds_alternative<InferenceFailure>(outcome));
}

TEST_CASE("detect_batch") {
  const auto mock = std::make_shared<MockLexiconBackend>(
      MockLexiconBackend::parse("lazy:0.95:stereotype\nalways:0.9\nrude:0.6\n"));
  CHECK(detect_batch(*mock, {}).empty());
  const std::vector<std::string> three{"They are lazy.", "Fine.", "Always rude."};
  const auto seq = detect_batch(*mock, three, 1);
  REQUIRE(seq.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::get<BiasScore>(seq[i]) == mock->detect(three[i]));

  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(i % 3 == 0 ? "lazy " + std::to_string(i) : "calm " + std::to_string(i));
  CHECK(detect_batch(*mock, ten, 4) == detect_batch(*mock, ten, 1));
  CHECK(classify_batch(*mock, ten, 4) == classify_batch(*mock, ten, 1));
}

TEST_CASE("detect_batch respects max_in_flight and isolates failures") {
  std::atomic<int> active{0}, peak{0};
  biasscope::testing::FunctionBackend slow([&](std::string_view s) {
    const int now = ++active;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(5ms);
    --active;
    if (s == "boom") throw InferenceError({FailureKind::Timeout, 0, "slow"});
    return 0.3;
  });
  std::vector<std::string> items(20, "ok");
  items[7] = "boom";
  const auto out = detect_batch(slow, items, 3);
  CHECK(peak <= 3);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(std::holds_alternative<InferenceFailure>(out[i]) == (i == 7));
  CHECK(std::get<InferenceFailure>(out[7]).kind == FailureKind::Timeout);
}

TEST_CASE("detect_batch deadline") {
  biasscope::testing::FunctionBackend slow([](std::string_view) {
    std::this_thread::sleep_for(30ms);
    return 0.3;
  });
  const std::vector<std::string> items(10, "x");
  const auto out = detect_batch(slow, items, 1, std::chrono::steady_clock::now() + 45ms);
  REQUIRE(out.size() == 10);
  CHECK(std::holds_alternative<BiasScore>(out[0]));
  CHECK(std::get<InferenceFailure>(out[9]).kind == FailureKind::BudgetExceeded);
}

TEST_CASE("make_backend") {
  CHECK(make_backend(MockLexiconPath{BIASSCOPE_DATA "/mock_lexicon.txt"})->probe());
  EndpointConfig cfg;
  cfg.url = "http://127.0.0.1:9/x";
  CHECK(make_backend(cfg)->describe().find("127.0.0.1") != std::string::npos);
}
