#include <doctest.h>

#include <algorithm>
#include <random>

#include "biasscope/comparison.hpp"
#include "biasscope/normalizer.hpp"
#include "biasscope/pipeline.hpp"
#include "support/generators.hpp"

using namespace biasscope;
using namespace biasscope::testing;

namespace {

/// `biased` of `total` sentences above threshold, all detected.
BiasReport report_with(std::size_t biased, std::size_t total, const std::string& type = "stereotype") {
  std::vector<SentenceAnalysis> xs;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    auto s = Sentence::make("S.", offset, offset + 2);
    offset += 3;
    xs.push_back(i < biased ? SentenceAnalysis::ok(s, BiasScore(0.9), BiasTypeDistribution::single(type))
                            : SentenceAnalysis::ok(s, BiasScore(0.1)));
  }
  return aggregate(std::move(xs));
}

const ProviderModel kA = ProviderModel::make("a", "model-a");
const ProviderModel kB = ProviderModel::make("b", "model-b");

}  // namespace

TEST_CASE("table deltas") {
  const struct {
    std::size_t biased;
    const char* expected;
  } rows[] = {{13, "2.60"}, {53, "10.60"}, {141, "28.20"}};
  for (const auto& row : rows) {
    const auto c = compare(kA, report_with(row.biased, 500), kB, report_with(0, 500));
    CHECK(format_percentage(c.delta_bias_pct) == row.expected);
    CHECK(c.delta_bias_pct > 0);
    CHECK(c.delta_bias_pct == doctest::Approx(100.0 * row.biased / 500.0).epsilon(1e-12));
  }
}

TEST_CASE("identical reports give zero deltas") {
  const auto r = report_with(3, 7);
  const auto c = compare(kA, r, kB, r);
  CHECK(c.delta_bias_pct == 0.0);
  CHECK(c.delta_avg_score == 0.0);
  for (const auto& [_, d] : c.type_deltas) CHECK(d == 0);
}

TEST_CASE("type deltas cover the union of labels") {
  const auto c = compare(kA, report_with(2, 4, "x"), kB, report_with(3, 4, "y"));
  CHECK(c.type_deltas == std::map<std::string, long long>{{"x", 2}, {"y", -3}});
}

TEST_CASE("antisymmetry") {
  std::mt19937 rng(23);
  for (int i = 0; i < 100; ++i) {
    const auto ra = random_report(rng, 15);
    const auto rb = random_report(rng, 15);
    const auto ab = compare(kA, ra, kB, rb);
    const auto ba = compare(kB, rb, kA, ra);
    CHECK(ab.delta_bias_pct == -ba.delta_bias_pct);
    CHECK(ab.delta_avg_score == -ba.delta_avg_score);
    CHECK(ab.type_deltas.size() == ba.type_deltas.size());
    for (const auto& [k, v] : ab.type_deltas) CHECK(ba.type_deltas.at(k) == -v);
    CHECK(std::abs(ab.delta_bias_pct - 100.0 * (ra.bias_ratio - rb.bias_ratio)) <= 1e-9);
  }
}

TEST_CASE("trial mean") {
  CHECK(trial_mean({2.0, 2.6, 3.2}) == doctest::Approx(2.6));
  CHECK(trial_mean({0, 0, 0}) == 0.0);
  CHECK(trial_mean({28.2}) == 28.2);
  CHECK_THROWS_AS(trial_mean({}), EmptyInput);
  std::mt19937 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> v(1 + rng() % 9);
    for (auto& x : v) x = uniform(rng, 0, 100);
    const double m = trial_mean(v);
    CHECK(m >= *std::min_element(v.begin(), v.end()));
    CHECK(m <= *std::max_element(v.begin(), v.end()));
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(trial_mean(v) == m);
  }
}

TEST_CASE("aggregate session") {
  const auto r1 = report_with(1, 2);
  const auto r2 = report_with(2, 3);
  const std::vector<ChatTurn> col_a{ChatTurn::user("q", report_with(1, 1)), ChatTurn::assistant("x", kA, r1),
                                    ChatTurn::user("q2"), ChatTurn::assistant("y", kA, r2)};
  const std::vector<ChatTurn> col_b{ChatTurn::assistant("z", kB, r1)};
  const auto [a, b] = aggregate_session(col_a, col_b);
  CHECK(a.total_sentences == 5);
  CHECK(a.biased_count == 3);
  CHECK(a.bias_ratio == doctest::Approx(0.6));
  CHECK(b == r1);
  CHECK(aggregate_column({ChatTurn::user("only prompt", r1)}) == BiasReport{});
}

TEST_CASE("aggregate session equals aggregate of concatenated sentences") {
  std::mt19937 rng(31);
  for (int i = 0; i < 100; ++i) {
    std::vector<ChatTurn> turns;
    std::vector<SentenceAnalysis> all;
    const std::size_t n = rng() % 5;
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = random_report(rng, 8);
      all.insert(all.end(), r.sentences.begin(), r.sentences.end());
      turns.push_back(ChatTurn::assistant("t", kA, r));
    }
    CHECK(aggregate_column(turns) == aggregate(all));
  }
}
