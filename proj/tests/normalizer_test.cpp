#include <doctest.h>

#include <random>

#include "biasscope/normalizer.hpp"

using namespace biasscope;

namespace {

double norm(std::vector<LabelScore> entries) {
  return normalize(RawClassifierOutput(std::move(entries))).value();
}

}  // namespace

TEST_CASE("label polarity") {
  CHECK(label_polarity("BIASED") == LabelPolarity::Positive);
  CHECK(label_polarity("non-toxic") == LabelPolarity::Negative);
  CHECK(label_polarity("Non Toxic") == LabelPolarity::Negative);
  CHECK(label_polarity("sarcasm") == LabelPolarity::Unknown);
  for (const char* l : {"biased", "toxic", "hate", "hateful", "label_1", "LABEL-1"})
    CHECK(label_polarity(l) == LabelPolarity::Positive);
  for (const char* l : {"unbiased", "non_biased", "non-biased", "non_toxic", "nothate", "neutral", "label_0"})
    CHECK(label_polarity(l) == LabelPolarity::Negative);
}

TEST_CASE("normalize examples") {
  CHECK(norm({{"biased", 0.91}}) == doctest::Approx(0.91));
  CHECK(norm({{"unbiased", 0.80}}) == doctest::Approx(0.20));
  CHECK(norm({{"toxic", 0.70}, {"non_toxic", 0.30}}) == doctest::Approx(0.70));
  CHECK_THROWS_AS(norm({{"cheerful", 0.9}}), AllLabelsUnknown);
}

TEST_CASE("positive entries win and the maximum is taken") {
  CHECK(norm({{"toxic", 0.2}, {"hate", 0.6}, {"neutral", 0.99}}) == doctest::Approx(0.6));
  CHECK(norm({{"neutral", 0.3}, {"nothate", 0.9}, {"joy", 0.5}}) == doctest::Approx(0.1));
}

TEST_CASE("raw output invariants") {
  CHECK_THROWS_AS(RawClassifierOutput({}), DecodeError);
  CHECK_THROWS_AS(RawClassifierOutput({{"biased", 1.2}}), DecodeError);
}

TEST_CASE("three shapes decode identically") {
  const Json single = {{"label", "BIASED"}, {"score", 0.73}};
  const Json flat = Json::array({single});
  const Json nested = Json::array({flat});
  const double a = normalize(decode_classifier_output(single)).value();
  CHECK(normalize(decode_classifier_output(flat)).value() == a);
  CHECK(normalize(decode_classifier_output(nested)).value() == a);
  CHECK(a == doctest::Approx(0.73));
  CHECK_THROWS_AS(decode_classifier_output(Json::array({nested})), DecodeError);
  CHECK_THROWS_AS(decode_classifier_output(Json{{"label", "x"}}), DecodeError);
  CHECK_THROWS_AS(decode_classifier_output(Json("biased")), DecodeError);
  CHECK_THROWS_AS(decode_classifier_output(Json::array()), DecodeError);
}

TEST_CASE("complement property") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = u(rng);
    for (const char* pos : {"biased", "toxic", "LABEL_1"})
      for (const char* neg : {"unbiased", "non-toxic", "label_0"})
        CHECK(std::abs(norm({{pos, s}}) - (1.0 - norm({{neg, s}}))) <= 1e-12);
  }
}

TEST_CASE("polarity overrides") {
  PolarityTable t = PolarityTable::defaults();
  t.load_overrides("# comment\nsexist,positive\nnot sexist , negative\n\n");
  CHECK(t.lookup("SEXIST") == LabelPolarity::Positive);
  CHECK(t.lookup("not-sexist") == LabelPolarity::Negative);
  CHECK(normalize(RawClassifierOutput({{"not_sexist", 0.9}}), t).value() == doctest::Approx(0.1));
  try {
    t.load_overrides("ok,positive\nbroken line\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(t.load_overrides("x,sideways\n"), ConfigError);
  CHECK_NOTHROW(PolarityTable(t).load_overrides_file(BIASSCOPE_DATA "/polarity_overrides.example.csv"));
}

TEST_CASE("pair preference") {
  CHECK(pair_preference(BiasScore(0.9), BiasScore(0.2)));
  CHECK_FALSE(pair_preference(BiasScore(0.5), BiasScore(0.5)));
  CHECK_FALSE(pair_preference(BiasScore(0.2), BiasScore(0.9)));
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const BiasScore a(u(rng)), b(u(rng));
    if (a.value() != b.value()) CHECK(pair_preference(a, b) != pair_preference(b, a));
  }
}

TEST_CASE("stereotype score") {
  CHECK(format_percentage(stereotype_score(1045, 1508)) == "69.30");
  CHECK(format_percentage(stereotype_score(0, 100)) == "0.00");
  CHECK(format_percentage(stereotype_score(754, 1508)) == "50.00");
  CHECK_THROWS_AS(stereotype_score(0, 0), EmptyInput);
  CHECK_THROWS_AS(stereotype_score(std::vector<bool>{}), EmptyInput);
  CHECK(stereotype_score(std::vector<bool>(7, true)) == 100.0);

  std::mt19937 rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<bool> x(1 + rng() % 50), y;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = rng() % 2;
    for (bool b : x) y.push_back(!b);
    CHECK(stereotype_score(x) + stereotype_score(y) == doctest::Approx(100.0).epsilon(1e-12));
  }
}

TEST_CASE("percentage formatting") {
  CHECK(format_percentage(2.6) == "2.60");
  CHECK(format_percentage(-0.0) == "0.00");
  CHECK(format_percentage(-0.001) == "0.00");
  CHECK(format_percentage(71.7) == "71.70");
}
