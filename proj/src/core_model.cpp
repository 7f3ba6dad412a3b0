#include "biasscope/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace biasscope {

namespace {

bool has_non_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return !std::isspace(c); });
}

bool in_unit_interval(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw InvariantError(std::string("expected object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) throw InvariantError(std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) throw InvariantError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double number_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) throw InvariantError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::size_t count_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw InvariantError(std::string("field '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

bool bool_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_boolean()) throw InvariantError(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

bool present(const Json& j, const char* key) {
  auto it = j.find(key);
  return it != j.end() && !it->is_null();
}

AnalysisStatus status_from_string(std::string_view s) {
  if (s == "ok") return AnalysisStatus::Ok;
  if (s == "detection_failed") return AnalysisStatus::DetectionFailed;
  if (s == "classification_failed") return AnalysisStatus::ClassificationFailed;
  throw InvariantError("unknown analysis status '" + std::string(s) + "'");
}

}  // namespace

BiasScore::BiasScore(double value) : value_(value) {
  if (!in_unit_interval(value))
    throw InvariantError("bias score must be a finite value in [0,1], got " + std::to_string(value));
}

Sentence Sentence::make(std::string text, std::size_t start, std::size_t end) {
  if (start >= end) throw InvariantError("sentence span must satisfy start < end");
  if (end - start != text.size()) throw InvariantError("sentence span length does not match text");
  if (!has_non_space(text)) throw InvariantError("sentence text is blank");
  return Sentence{std::move(text), start, end};
}

BiasTypeDistribution::BiasTypeDistribution(std::vector<TypeProbability> entries)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw InvariantError("bias type distribution has no entries");
  std::set<std::string_view> seen;
  const TypeProbability* top = nullptr;
  for (const auto& e : entries_) {
    if (e.label.empty()) throw InvariantError("bias type label is empty");
    if (!in_unit_interval(e.probability))
      throw InvariantError("bias type probability outside [0,1] for '" + e.label + "'");
    if (!seen.insert(e.label).second)
      throw InvariantError("duplicate bias type label '" + e.label + "'");
    if (top == nullptr || e.probability > top->probability ||
        (e.probability == top->probability && e.label < top->label))
      top = &e;
  }
  top_label_ = top->label;
}

BiasTypeDistribution BiasTypeDistribution::single(std::string label) {
  return BiasTypeDistribution({TypeProbability{std::move(label), 1.0}});
}

std::string_view to_string(AnalysisStatus status) {
  switch (status) {
    case AnalysisStatus::Ok: return "ok";
    case AnalysisStatus::DetectionFailed: return "detection_failed";
    case AnalysisStatus::ClassificationFailed: return "classification_failed";
  }
  return "ok";
}

SentenceAnalysis SentenceAnalysis::ok(Sentence sentence, BiasScore score,
                                      std::optional<BiasTypeDistribution> bias_type) {
  if (bias_type && !score.is_biased())
    throw InvariantError("bias type attached to an unbiased sentence");
  return SentenceAnalysis(std::move(sentence), score, std::move(bias_type), AnalysisStatus::Ok);
}

SentenceAnalysis SentenceAnalysis::detection_failed(Sentence sentence) {
  return SentenceAnalysis(std::move(sentence), std::nullopt, std::nullopt,
                          AnalysisStatus::DetectionFailed);
}

SentenceAnalysis SentenceAnalysis::classification_failed(Sentence sentence, BiasScore score) {
  if (!score.is_biased())
    throw InvariantError("classification can only fail for a biased sentence");
  return SentenceAnalysis(std::move(sentence), score, std::nullopt,
                          AnalysisStatus::ClassificationFailed);
}

void BiasReport::validate() const {
  if (biased_count > total_sentences) throw InvariantError("biased_count exceeds total_sentences");
  if (failed_count > total_sentences) throw InvariantError("failed_count exceeds total_sentences");
  if (biased_count + failed_count > total_sentences)
    throw InvariantError("biased_count + failed_count exceeds total_sentences");
  const std::size_t analyzable = total_sentences - failed_count;
  const double expected_ratio =
      analyzable > 0 ? static_cast<double>(biased_count) / static_cast<double>(analyzable) : 0.0;
  if (!std::isfinite(bias_ratio) || std::abs(bias_ratio - expected_ratio) > 1e-9)
    throw InvariantError("bias_ratio inconsistent with counts");
  if (!in_unit_interval(avg_bias_score)) throw InvariantError("avg_bias_score outside [0,1]");
  std::size_t typed = 0;
  for (const auto& [label, count] : type_counts) {
    if (label.empty() || count == 0) throw InvariantError("type_counts entries must be positive");
    typed += count;
  }
  if (typed > biased_count) throw InvariantError("type_counts exceed biased_count");
  if (!sentences.empty()) {
    if (sentences.size() != total_sentences)
      throw InvariantError("sentence list length differs from total_sentences");
    std::size_t biased = 0, failed = 0;
    for (const auto& s : sentences) {
      biased += s.is_biased() ? 1 : 0;
      failed += s.status() == AnalysisStatus::DetectionFailed ? 1 : 0;
    }
    if (biased != biased_count || failed != failed_count)
      throw InvariantError("sentence statuses disagree with report counts");
  }
}

ProviderModel ProviderModel::make(std::string provider_id, std::string model_id,
                                  std::string display_name) {
  if (provider_id.empty()) throw InvariantError("provider_id is empty");
  if (model_id.empty()) throw InvariantError("model_id is empty");
  if (display_name.empty()) display_name = provider_id + "/" + model_id;
  return ProviderModel{std::move(provider_id), std::move(model_id), std::move(display_name)};
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::System: return "system";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  if (s == "system") return Role::System;
  throw InvariantError("unknown role '" + std::string(s) + "'");
}

ChatTurn ChatTurn::user(std::string content, std::optional<BiasReport> report) {
  return ChatTurn(Role::User, std::move(content), std::nullopt, std::move(report));
}

ChatTurn ChatTurn::system(std::string content) {
  return ChatTurn(Role::System, std::move(content), std::nullopt, std::nullopt);
}

ChatTurn ChatTurn::assistant(std::string content, ProviderModel model,
                             std::optional<BiasReport> report) {
  return ChatTurn(Role::Assistant, std::move(content), std::move(model), std::move(report));
}

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const BiasScore& v) { j = v.value(); }

void to_json(Json& j, const Sentence& v) {
  j = Json{{"text", v.text}, {"start", v.start}, {"end", v.end}};
}

void to_json(Json& j, const BiasTypeDistribution& v) {
  Json entries = Json::array();
  for (const auto& e : v.entries())
    entries.push_back(Json{{"label", e.label}, {"probability", e.probability}});
  j = Json{{"entries", std::move(entries)}, {"top_label", v.top_label()}};
}

void to_json(Json& j, const SentenceAnalysis& v) {
  j = Json{{"sentence", v.sentence()},
           {"is_biased", v.is_biased()},
           {"status", std::string(to_string(v.status()))}};
  if (v.score()) j["score"] = v.score()->value();
  if (v.bias_type()) j["bias_type"] = *v.bias_type();
}

void to_json(Json& j, const BiasReport& v) {
  Json counts = Json::object();
  for (const auto& [label, n] : v.type_counts) counts[label] = n;
  j = Json{{"total_sentences", v.total_sentences},
           {"biased_count", v.biased_count},
           {"failed_count", v.failed_count},
           {"bias_ratio", v.bias_ratio},
           {"avg_bias_score", v.avg_bias_score},
           {"type_counts", std::move(counts)},
           {"sentences", v.sentences}};
}

void to_json(Json& j, const ProviderModel& v) {
  j = Json{{"provider_id", v.provider_id},
           {"model_id", v.model_id},
           {"display_name", v.display_name}};
}

void to_json(Json& j, const ComparisonReport& v) {
  Json deltas = Json::object();
  for (const auto& [label, d] : v.type_deltas) deltas[label] = d;
  j = Json{{"model_a", v.model_a},
           {"model_b", v.model_b},
           {"report_a", v.report_a},
           {"report_b", v.report_b},
           {"delta_bias_pct", v.delta_bias_pct},
           {"delta_avg_score", v.delta_avg_score},
           {"type_deltas", std::move(deltas)}};
}

void to_json(Json& j, const ChatTurn& v) {
  j = Json{{"role", std::string(to_string(v.role()))}, {"content", v.content()}};
  if (v.model()) j["model"] = *v.model();
  if (v.bias_report()) j["bias_report"] = *v.bias_report();
}

BiasScore bias_score_from_json(const Json& j) {
  if (!j.is_number()) throw InvariantError("bias score must be a number");
  return BiasScore(j.get<double>());
}

Sentence sentence_from_json(const Json& j) {
  return Sentence::make(string_field(j, "text"), count_field(j, "start"), count_field(j, "end"));
}

BiasTypeDistribution bias_type_from_json(const Json& j) {
  const Json& entries = field(j, "entries");
  if (!entries.is_array()) throw InvariantError("bias_type.entries must be an array");
  std::vector<TypeProbability> out;
  for (const auto& e : entries)
    out.push_back(TypeProbability{string_field(e, "label"), number_field(e, "probability")});
  BiasTypeDistribution dist(std::move(out));
  if (present(j, "top_label") && string_field(j, "top_label") != dist.top_label())
    throw InvariantError("bias_type.top_label is not the argmax label");
  return dist;
}

SentenceAnalysis sentence_analysis_from_json(const Json& j) {
  Sentence sentence = sentence_from_json(field(j, "sentence"));
  const AnalysisStatus status = status_from_string(string_field(j, "status"));
  std::optional<SentenceAnalysis> out;
  switch (status) {
    case AnalysisStatus::DetectionFailed:
      if (present(j, "score")) throw InvariantError("detection_failed sentence carries a score");
      out = SentenceAnalysis::detection_failed(std::move(sentence));
      break;
    case AnalysisStatus::ClassificationFailed:
      if (present(j, "bias_type"))
        throw InvariantError("classification_failed sentence carries a bias type");
      out = SentenceAnalysis::classification_failed(std::move(sentence),
                                                    bias_score_from_json(field(j, "score")));
      break;
    case AnalysisStatus::Ok: {
      std::optional<BiasTypeDistribution> type;
      if (present(j, "bias_type")) type = bias_type_from_json(j.at("bias_type"));
      out = SentenceAnalysis::ok(std::move(sentence), bias_score_from_json(field(j, "score")),
                                 std::move(type));
      break;
    }
  }
  if (present(j, "is_biased") && bool_field(j, "is_biased") != out->is_biased())
    throw InvariantError("is_biased disagrees with score");
  return std::move(*out);
}

BiasReport bias_report_from_json(const Json& j) {
  BiasReport r;
  r.total_sentences = count_field(j, "total_sentences");
  r.biased_count = count_field(j, "biased_count");
  r.failed_count = present(j, "failed_count") ? count_field(j, "failed_count") : 0;
  r.bias_ratio = number_field(j, "bias_ratio");
  r.avg_bias_score = number_field(j, "avg_bias_score");
  if (present(j, "type_counts")) {
    const Json& counts = j.at("type_counts");
    if (!counts.is_object()) throw InvariantError("type_counts must be an object");
    for (const auto& [label, n] : counts.items()) {
      if (!n.is_number_integer() || n.get<long long>() <= 0)
        throw InvariantError("type_counts values must be positive integers");
      r.type_counts[label] = n.get<std::size_t>();
    }
  }
  if (present(j, "sentences")) {
    const Json& list = j.at("sentences");
    if (!list.is_array()) throw InvariantError("sentences must be an array");
    for (const auto& s : list) r.sentences.push_back(sentence_analysis_from_json(s));
  }
  r.validate();
  return r;
}

ProviderModel provider_model_from_json(const Json& j) {
  std::string display = present(j, "display_name") ? string_field(j, "display_name") : "";
  return ProviderModel::make(string_field(j, "provider_id"), string_field(j, "model_id"),
                             std::move(display));
}

ComparisonReport comparison_report_from_json(const Json& j) {
  ComparisonReport c;
  c.model_a = provider_model_from_json(field(j, "model_a"));
  c.model_b = provider_model_from_json(field(j, "model_b"));
  c.report_a = bias_report_from_json(field(j, "report_a"));
  c.report_b = bias_report_from_json(field(j, "report_b"));
  c.delta_bias_pct = number_field(j, "delta_bias_pct");
  c.delta_avg_score = number_field(j, "delta_avg_score");
  if (present(j, "type_deltas")) {
    for (const auto& [label, d] : j.at("type_deltas").items()) {
      if (!d.is_number_integer()) throw InvariantError("type_deltas values must be integers");
      c.type_deltas[label] = d.get<long long>();
    }
  }
  if (std::abs(c.delta_bias_pct - 100.0 * (c.report_a.bias_ratio - c.report_b.bias_ratio)) > 1e-9)
    throw InvariantError("delta_bias_pct inconsistent with reports");
  return c;
}

ChatTurn chat_turn_from_json(const Json& j) {
  const Role role = role_from_string(string_field(j, "role"));
  std::string content = string_field(j, "content");
  std::optional<BiasReport> report;
  if (present(j, "bias_report")) report = bias_report_from_json(j.at("bias_report"));
  switch (role) {
    case Role::Assistant:
      return ChatTurn::assistant(std::move(content), provider_model_from_json(field(j, "model")),
                                 std::move(report));
    case Role::User:
      if (present(j, "model")) throw InvariantError("user turns do not carry a model");
      return ChatTurn::user(std::move(content), std::move(report));
    case Role::System:
      if (present(j, "model")) throw InvariantError("system turns do not carry a model");
      if (report) throw InvariantError("system turns do not carry a bias report");
      return ChatTurn::system(std::move(content));
  }
  throw InvariantError("unreachable role");
}

}  // namespace biasscope
