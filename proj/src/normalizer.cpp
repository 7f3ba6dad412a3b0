#include "biasscope/normalizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace biasscope {

namespace {

LabelScore decode_entry(const Json& e) {
  if (!e.is_object()) throw DecodeError("classifier entry is not an object");
  auto label = e.find("label");
  auto score = e.find("score");
  if (label == e.end() || !label->is_string())
    throw DecodeError("classifier entry lacks a string 'label'");
  if (score == e.end() || !score->is_number())
    throw DecodeError("classifier entry lacks a numeric 'score'");
  const double s = score->get<double>();
  if (!std::isfinite(s) || s < 0.0 || s > 1.0)
    throw DecodeError("classifier score outside [0,1]");
  return LabelScore{label->get<std::string>(), s};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

RawClassifierOutput::RawClassifierOutput(std::vector<LabelScore> entries)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw DecodeError("classifier output has no entries");
  for (const auto& e : entries_) {
    if (!std::isfinite(e.score) || e.score < 0.0 || e.score > 1.0)
      throw DecodeError("classifier score outside [0,1] for '" + e.label + "'");
  }
}

RawClassifierOutput decode_classifier_output(const Json& body) {
  std::vector<LabelScore> entries;
  if (body.is_object()) {
    entries.push_back(decode_entry(body));
  } else if (body.is_array()) {
    for (const auto& item : body) {
      if (item.is_object()) {
        entries.push_back(decode_entry(item));
      } else if (item.is_array()) {
        for (const auto& inner : item) {
          if (!inner.is_object()) throw DecodeError("classifier output nested too deeply");
          entries.push_back(decode_entry(inner));
        }
      } else {
        throw DecodeError("unexpected classifier output element");
      }
    }
  } else {
    throw DecodeError("classifier output must be an object or array");
  }
  return RawClassifierOutput(std::move(entries));
}

std::string_view to_string(LabelPolarity p) {
  switch (p) {
    case LabelPolarity::Positive: return "positive";
    case LabelPolarity::Negative: return "negative";
    case LabelPolarity::Unknown: return "unknown";
  }
  return "unknown";
}

std::string PolarityTable::canonical_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (unsigned char c : trim(label)) {
    if (c == '-' || c == ' ') c = '_';
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const PolarityTable& PolarityTable::defaults() {
  static const PolarityTable table = [] {
    PolarityTable t;
    for (auto l : {"biased", "toxic", "hate", "hateful", "label_1"})
      t.set(l, LabelPolarity::Positive);
    for (auto l : {"unbiased", "non_biased", "non_toxic", "nothate", "neutral", "label_0"})
      t.set(l, LabelPolarity::Negative);
    return t;
  }();
  return table;
}

void PolarityTable::set(std::string_view label, LabelPolarity polarity) {
  table_[canonical_label(label)] = polarity;
}

LabelPolarity PolarityTable::lookup(std::string_view label) const {
  auto it = table_.find(canonical_label(label));
  return it == table_.end() ? LabelPolarity::Unknown : it->second;
}

void PolarityTable::load_overrides(std::string_view contents) {
  std::istringstream in{std::string(contents)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string_view::npos)
      throw ConfigError("polarity", line_no,
                        "line " + std::to_string(line_no) + ": expected 'label,polarity'");
    const std::string_view label = trim(line.substr(0, comma));
    const std::string polarity = canonical_label(line.substr(comma + 1));
    if (label.empty())
      throw ConfigError("label", line_no, "line " + std::to_string(line_no) + ": empty label");
    if (polarity == "positive") {
      set(label, LabelPolarity::Positive);
    } else if (polarity == "negative") {
      set(label, LabelPolarity::Negative);
    } else {
      throw ConfigError("polarity", line_no,
                        "line " + std::to_string(line_no) +
                            ": polarity must be 'positive' or 'negative'");
    }
  }
}

void PolarityTable::load_overrides_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot read polarity file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  load_overrides(buf.str());
}

LabelPolarity label_polarity(std::string_view label) {
  return PolarityTable::defaults().lookup(label);
}

BiasScore normalize(const RawClassifierOutput& output, const PolarityTable& table) {
  std::optional<double> best_positive;
  std::optional<double> best_negative;
  for (const auto& e : output.entries()) {
    switch (table.lookup(e.label)) {
      case LabelPolarity::Positive:
        best_positive = std::max(best_positive.value_or(0.0), e.score);
        break;
      case LabelPolarity::Negative:
        best_negative = std::max(best_negative.value_or(0.0), e.score);
        break;
      case LabelPolarity::Unknown:
        break;
    }
  }
  if (best_positive) return BiasScore(*best_positive);
  if (best_negative) return BiasScore(1.0 - *best_negative);
  throw AllLabelsUnknown("no classifier label with known polarity");
}

double stereotype_score(std::size_t preferred, std::size_t total) {
  if (total == 0) throw EmptyInput("stereotype score needs at least one pair");
  if (preferred > total) throw InvariantError("more preferred pairs than pairs");
  return 100.0 * static_cast<double>(preferred) / static_cast<double>(total);
}

double stereotype_score(const std::vector<bool>& preferences) {
  return stereotype_score(
      static_cast<std::size_t>(std::count(preferences.begin(), preferences.end(), true)),
      preferences.size());
}

std::string format_percentage(double pct) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  // "-0.00" reads as a sign error in tables.
  if (std::string_view(buf) == "-0.00") return "0.00";
  return buf;
}

}  // namespace biasscope
