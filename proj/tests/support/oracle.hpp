#pragma once

// Brute-force reference for analyze() over the mock lexicon: texts are built
// from known sentences, so spans, scores and aggregates are computed here
// without the segmenter, lexicon backend or aggregate().

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "biasscope/core_model.hpp"

namespace biasscope::testing {

struct OracleTerm {
  std::string term;
  double weight;
  std::string tag;
};

inline constexpr double kOracleFloor = 0.1;

/// Distinct weights, one exactly at the threshold, and multi-word terms.
inline const std::vector<OracleTerm>& oracle_terms() {
  static const std::vector<OracleTerm> terms{
      {"lazy", 0.95, "stereotype"},      {"always late", 0.85, "generalization"},
      {"bossy", 0.8, "gender"},          {"thugs", 0.9, "race-color"},
      {"borderline", 0.5, "political"},  {"mild", 0.3, "generalization"},
      {"too old", 0.72, "age"},          {"fanatics", 0.66, "religion"},
      {"welfare queen", 0.93, "socioeconomic"},
  };
  return terms;
}

inline std::string oracle_lexicon_text() {
  std::ostringstream out;
  out << "# oracle lexicon\n*:" << kOracleFloor << "\n";
  for (const auto& t : oracle_terms()) out << t.term << ':' << t.weight << ':' << t.tag << '\n';
  return out.str();
}

struct GeneratedSentence {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct GeneratedText {
  std::string text;
  std::vector<GeneratedSentence> sentences;
};

/// Up to `max_sentences` sentences: a capitalised first word, plain
/// lowercase words (some of them lexicon terms, in any case), a closing
/// '.', '!' or '?', separated by spaces or newlines.
inline GeneratedText random_text(std::mt19937& rng, std::size_t max_sentences = 20) {
  static const std::vector<std::string> filler{"the", "people", "were", "here", "today", "quite",
                                               "report", "said", "not", "late", "old", "queen",
                                               "always", "welfare", "very", "boss", "lazily"};
  const auto& terms = oracle_terms();
  std::uniform_int_distribution<std::size_t> n_sent(0, max_sentences);
  GeneratedText g;
  const std::size_t n = n_sent(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) g.text += (rng() % 4 == 0) ? "\n" : (rng() % 3 == 0 ? "  " : " ");
    std::vector<std::string> words;
    for (std::size_t w = 0, k = 2 + rng() % 8; w < k; ++w) {
      if (rng() % 6 == 0) {
        std::string t = terms[rng() % terms.size()].term;
        if (rng() % 3 == 0) std::transform(t.begin(), t.end(), t.begin(), ::toupper);
        words.push_back(t);
      } else {
        words.push_back(filler[rng() % filler.size()]);
      }
    }
    std::string s;
    for (std::size_t w = 0; w < words.size(); ++w) s += (w ? " " : "") + words[w];
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    s += ".!?"[rng() % 3];
    g.sentences.push_back({s, g.text.size(), g.text.size() + s.size()});
    g.text += s;
  }
  if (rng() % 5 == 0) g.text += "\n";
  return g;
}

inline std::vector<std::string> oracle_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Highest-weight term whose tokens appear contiguously in the sentence.
inline const OracleTerm* oracle_match(const std::string& sentence) {
  const auto tokens = oracle_tokens(sentence);
  const OracleTerm* best = nullptr;
  for (const auto& t : oracle_terms()) {
    const auto needle = oracle_tokens(t.term);
    const bool found =
        std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) != tokens.end();
    if (found && (!best || t.weight > best->weight)) best = &t;
  }
  return best;
}

/// Empty when `got` matches the reference; otherwise the first difference.
inline std::string oracle_diff(const GeneratedText& g, const BiasReport& got) {
  std::ostringstream why;
  if (got.sentences.size() != g.sentences.size() || got.total_sentences != g.sentences.size()) {
    why << "sentence count " << got.sentences.size() << " != " << g.sentences.size();
    return why.str();
  }
  std::size_t biased = 0;
  std::vector<double> scores;
  std::map<std::string, std::size_t> types;
  for (std::size_t i = 0; i < g.sentences.size(); ++i) {
    const auto& want = g.sentences[i];
    const auto& a = got.sentences[i];
    if (a.sentence().text != want.text || a.sentence().start != want.start || a.sentence().end != want.end) {
      why << "sentence " << i << " span [" << a.sentence().start << "," << a.sentence().end << ") '"
          << a.sentence().text << "' != [" << want.start << "," << want.end << ") '" << want.text << "'";
      return why.str();
    }
    const OracleTerm* m = oracle_match(want.text);
    const double score = m ? m->weight : kOracleFloor;
    const bool is_biased = score > 0.5;
    if (a.status() != AnalysisStatus::Ok || !a.score() || a.score()->value() != score ||
        a.is_biased() != is_biased) {
      why << "sentence " << i << " '" << want.text << "' scored wrongly";
      return why.str();
    }
    if (is_biased) {
      ++biased;
      ++types[m->tag];
      if (!a.bias_type() || a.bias_type()->top_label() != m->tag) {
        why << "sentence " << i << " type mismatch";
        return why.str();
      }
    } else if (a.bias_type()) {
      why << "sentence " << i << " classified although unbiased";
      return why.str();
    }
    scores.push_back(score);
  }
  std::sort(scores.begin(), scores.end());
  double sum = 0;
  for (double s : scores) sum += s;
  const double avg = scores.empty() ? 0.0 : sum / scores.size();
  const double ratio = scores.empty() ? 0.0 : static_cast<double>(biased) / scores.size();
  if (got.biased_count != biased) why << "biased_count " << got.biased_count << " != " << biased;
  else if (got.failed_count != 0) why << "failed_count " << got.failed_count;
  else if (std::abs(got.bias_ratio - ratio) > 1e-12) why << "bias_ratio " << got.bias_ratio << " != " << ratio;
  else if (std::abs(got.avg_bias_score - avg) > 1e-12) why << "avg_bias_score " << got.avg_bias_score << " != " << avg;
  else if (got.type_counts != types) why << "type_counts differ";
  return why.str();
}

inline std::size_t oracle_biased_count(const GeneratedText& g) {
  std::size_t n = 0;
  for (const auto& s : g.sentences) {
    const OracleTerm* m = oracle_match(s.text);
    n += (m ? m->weight : kOracleFloor) > 0.5;
  }
  return n;
}

}  // namespace biasscope::testing
