#include "biasscope/eval.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "biasscope/csv.hpp"
#include "biasscope/normalizer.hpp"
#include "parallel.hpp"

namespace biasscope {

namespace {

std::string read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetError::Kind::Unreadable, 0, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);
  return text;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

struct Header {
  std::vector<std::string> names;
  std::size_t width = 0;

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw DatasetError(DatasetError::Kind::MissingColumn, 1,
                       "missing column '" + std::string(name) + "'");
  }
};

Header read_header(CsvReader& reader) {
  auto row = reader.next();
  if (!row) throw DatasetError(DatasetError::Kind::MissingColumn, 1, "file has no header row");
  Header h;
  if (!row->fields.empty() && row->fields[0].starts_with("\xEF\xBB\xBF")) row->fields[0].erase(0, 3);
  for (auto& f : row->fields) h.names.push_back(lower(trim(f)));
  h.width = h.names.size();
  return h;
}

void check_width(const CsvRow& row, const Header& h) {
  if (row.fields.size() != h.width)
    throw DatasetError(DatasetError::Kind::MalformedRow, row.line,
                       "line " + std::to_string(row.line) + ": expected " +
                           std::to_string(h.width) + " fields, found " +
                           std::to_string(row.fields.size()));
}

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

std::size_t count_words(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

}  // namespace

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------

std::vector<CrowsPair> parse_crows(std::string_view csv_text) {
  CsvReader reader(csv_text, ',');
  const Header h = read_header(reader);
  const std::size_t i_more = h.require("sent_more");
  const std::size_t i_less = h.require("sent_less");
  const std::size_t i_type = h.require("bias_type");

  std::vector<CrowsPair> pairs;
  while (auto row = reader.next()) {
    check_width(*row, h);
    CrowsPair p{row->fields[i_more], row->fields[i_less], trim(row->fields[i_type])};
    if (trim(p.sent_more).empty() || trim(p.sent_less).empty())
      throw DatasetError(DatasetError::Kind::MalformedRow, row->line,
                         "line " + std::to_string(row->line) + ": empty sentence");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<CrowsPair> load_crows(const std::filesystem::path& path) {
  return parse_crows(read_dataset(path));
}

CrowsReport run_crows(const std::vector<CrowsPair>& pairs, const Backend& detector,
                      std::size_t max_in_flight, const SecondsClock& clock) {
  if (pairs.empty()) throw EmptyInput("no sentence pairs to evaluate");

  struct PairResult {
    std::optional<bool> preferred;
    double seconds = 0.0;
  };
  std::vector<PairResult> results(pairs.size());
  detail::parallel_for(pairs.size(), max_in_flight, [&](std::size_t i) {
    const double t0 = clock();
    const auto more = try_detect(detector, pairs[i].sent_more);
    const auto less = try_detect(detector, pairs[i].sent_less);
    results[i].seconds = clock() - t0;
    if (const auto* m = std::get_if<BiasScore>(&more))
      if (const auto* l = std::get_if<BiasScore>(&less))
        results[i].preferred = pair_preference(*m, *l);
  });

  CrowsReport report;
  report.total_pairs = pairs.size();
  std::map<std::string, TypeStereotypeScore> by_type;
  std::vector<double> latencies;
  latencies.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& t = by_type[pairs[i].bias_type];
    t.bias_type = pairs[i].bias_type;
    latencies.push_back(results[i].seconds);
    if (!results[i].preferred) {
      ++t.failed;
      ++report.failed_pairs;
      continue;
    }
    ++t.pairs;
    ++report.evaluated_pairs;
    if (*results[i].preferred) {
      ++t.preferred;
      ++report.preferred_pairs;
    }
  }
  if (report.evaluated_pairs > 0)
    report.ss = stereotype_score(report.preferred_pairs, report.evaluated_pairs);
  report.mean_latency_s = sorted_mean(latencies);
  for (auto& [_, t] : by_type) {
    if (t.pairs > 0) t.ss = stereotype_score(t.preferred, t.pairs);
    report.per_type.push_back(t);
  }
  std::stable_sort(report.per_type.begin(), report.per_type.end(),
                   [](const TypeStereotypeScore& a, const TypeStereotypeScore& b) {
                     const auto na = a.pairs + a.failed;
                     const auto nb = b.pairs + b.failed;
                     return na > nb;
                   });
  return report;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<GoldLabel> parse_gold(std::string_view raw) {
  const std::string s = lower(trim(raw));
  if (s == "biased" || s == "1") return GoldLabel::Biased;
  if (s == "non-biased" || s == "unbiased" || s == "0") return GoldLabel::Unbiased;
  return std::nullopt;
}

}  // namespace

std::vector<BabeExample> parse_babe(std::string_view text) {
  CsvReader reader(text, sniff_delimiter(text));
  const Header h = read_header(reader);
  const std::size_t i_text = h.require("text");
  const auto i_label = h.find("label") ? h.find("label") : h.find("label_bias");
  if (!i_label)
    throw DatasetError(DatasetError::Kind::MissingColumn, 1, "missing column 'label'");

  std::vector<BabeExample> out;
  while (auto row = reader.next()) {
    check_width(*row, h);
    const auto gold = parse_gold(row->fields[*i_label]);
    if (!gold)
      throw DatasetError(DatasetError::Kind::UnknownLabel, row->line,
                         "line " + std::to_string(row->line) + ": unknown label '" +
                             row->fields[*i_label] + "'");
    if (trim(row->fields[i_text]).empty())
      throw DatasetError(DatasetError::Kind::MalformedRow, row->line,
                         "line " + std::to_string(row->line) + ": empty text");
    out.push_back({row->fields[i_text], *gold});
  }
  return out;
}

std::vector<BabeExample> load_babe(const std::filesystem::path& path) {
  return parse_babe(read_dataset(path));
}

double f1_from(double precision_pct, double recall_pct) {
  const double denom = precision_pct + recall_pct;
  return denom > 0.0 ? 2.0 * precision_pct * recall_pct / denom : 0.0;
}

BinaryMetrics compute_metrics(const ConfusionMatrix& m) {
  if (m.total() == 0) throw EmptyMatrix("confusion matrix is empty");
  BinaryMetrics out;
  out.accuracy = 100.0 * static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  if (m.tp + m.fp == 0)
    out.precision_undefined = true;
  else
    out.precision = 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  if (m.tp + m.fn == 0)
    out.recall_undefined = true;
  else
    out.recall = 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (out.precision_undefined || out.recall_undefined || out.precision + out.recall == 0.0)
    out.f1_undefined = true;
  else
    out.f1 = f1_from(out.precision, out.recall);
  return out;
}

BabeReport run_babe(const std::vector<BabeExample>& examples, const Backend& detector,
                    double threshold, std::size_t max_in_flight) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw InvariantError("threshold must lie in [0, 1]");
  if (examples.empty()) throw EmptyInput("no examples to evaluate");

  std::vector<std::string> texts;
  texts.reserve(examples.size());
  for (const auto& e : examples) texts.push_back(e.text);
  const auto scores = detect_batch(detector, texts, max_in_flight);

  BabeReport report;
  report.threshold = threshold;
  report.total = examples.size();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto* s = std::get_if<BiasScore>(&scores[i]);
    if (!s) {
      ++report.failed;
      continue;
    }
    const bool predicted = s->value() > threshold;
    const bool actual = examples[i].gold == GoldLabel::Biased;
    if (predicted && actual) ++report.matrix.tp;
    else if (predicted) ++report.matrix.fp;
    else if (actual) ++report.matrix.fn;
    else ++report.matrix.tn;
  }
  if (report.matrix.total() > 0) report.metrics = compute_metrics(report.matrix);
  return report;
}

// ---------------------------------------------------------------------------

LatencyStats latency_stats(std::vector<double> samples, std::size_t failures) {
  if (samples.empty() && failures == 0) throw EmptyInput("no latency samples or failures");
  LatencyStats out;
  out.n = samples.size();
  out.failures = failures;
  out.success_rate = 100.0 * static_cast<double>(out.n) / static_cast<double>(out.n + failures);
  if (samples.empty()) return out;

  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  LatencySummary s;
  s.min = samples.front();
  s.max = samples.back();
  s.median = n % 2 == 1 ? samples[n / 2] : (samples[n / 2 - 1] + samples[n / 2]) / 2.0;
  s.mean = std::clamp(sorted_mean(samples), s.min, s.max);
  if (n > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  out.summary = s;
  return out;
}

std::vector<BenchCase> builtin_bench_cases() {
  return {
      {"short", "The committee approved the new budget."},
      {"medium",
       "The team met on Monday. They discussed the budget. Everyone agreed on the next steps."},
      {"long",
       "The city council met on Tuesday evening. Members reviewed the proposed transit plan. "
       "The plan adds three new bus routes. Residents asked questions about the schedule. "
       "Engineers explained the expected travel times. The budget office presented its cost "
       "estimate. Several members requested more detailed figures. The council scheduled a "
       "public hearing. Staff will publish the documents online. A final vote follows next "
       "month."},
      {"very_long",
       "The library opens early. Visitors borrow many books. Children attend weekly readings. "
       "Volunteers organize the shelves. The catalog was updated. New computers arrived "
       "recently. Staff offer free workshops. Students study in groups. The garden needs "
       "watering. Parking remains quite limited. Donations support new programs. The roof was "
       "repaired. Local artists display paintings. Evening hours were extended. Members "
       "receive monthly newsletters. The cafe serves coffee. Quiet rooms are available. The "
       "director thanked every volunteer. Attendance grew again this year. The board approved "
       "the budget."},
  };
}

std::vector<BenchCase> load_bench_cases(const std::filesystem::path& path) {
  const std::string text = read_dataset(path);
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DatasetError(DatasetError::Kind::MalformedRow, 0,
                       path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array() || doc.empty())
    throw DatasetError(DatasetError::Kind::MalformedRow, 0,
                       path.string() + ": expected a non-empty array of {name, text}");
  std::vector<BenchCase> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("name") || !item.contains("text") ||
        !item["name"].is_string() || !item["text"].is_string() ||
        trim(item["text"].get<std::string>()).empty())
      throw DatasetError(DatasetError::Kind::MalformedRow, 0,
                         path.string() + ": each case needs string 'name' and non-empty 'text'");
    out.push_back({item["name"].get<std::string>(), item["text"].get<std::string>()});
  }
  return out;
}

std::vector<BenchResult> run_latency_bench(const std::vector<BenchCase>& cases, std::size_t trials,
                                           const PipelineConfig& config,
                                           const SecondsClock& clock) {
  if (trials < 1) throw InvariantError("trials must be at least 1");
  std::vector<BenchResult> out;
  for (const auto& c : cases) {
    BenchResult r;
    r.bench_case = c;
    r.words = count_words(c.text);
    std::vector<double> samples;
    std::size_t failures = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const double t0 = clock();
      const BiasReport report = analyze(c.text, config);
      const double elapsed = clock() - t0;
      r.sentences = report.total_sentences;
      const bool detected = std::none_of(
          report.sentences.begin(), report.sentences.end(),
          [](const SentenceAnalysis& s) { return s.status() == AnalysisStatus::DetectionFailed; });
      if (detected && report.total_sentences > 0)
        samples.push_back(elapsed);
      else
        ++failures;
    }
    r.stats = latency_stats(std::move(samples), failures);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Json metrics_json(const BinaryMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"precision_undefined", m.precision_undefined},
          {"recall_undefined", m.recall_undefined},
          {"f1_undefined", m.f1_undefined}};
}

Json stats_json(const LatencyStats& s) {
  Json j = {{"n", s.n}, {"failures", s.failures}, {"success_rate", s.success_rate}};
  if (s.summary) {
    j["mean"] = s.summary->mean;
    j["median"] = s.summary->median;
    j["min"] = s.summary->min;
    j["max"] = s.summary->max;
    j["std"] = s.summary->std;
  }
  return j;
}

}  // namespace

Json to_json(const CrowsReport& r) {
  Json types = Json::array();
  for (const auto& t : r.per_type)
    types.push_back({{"bias_type", t.bias_type},
                     {"pairs", t.pairs},
                     {"preferred", t.preferred},
                     {"failed", t.failed},
                     {"ss", t.ss}});
  return {{"schema", kEvalSchema},
          {"kind", "crows"},
          {"total_pairs", r.total_pairs},
          {"evaluated_pairs", r.evaluated_pairs},
          {"failed_pairs", r.failed_pairs},
          {"preferred_pairs", r.preferred_pairs},
          {"ss", r.ss},
          {"mean_latency_s", r.mean_latency_s},
          {"per_type", std::move(types)}};
}

Json to_json(const BabeReport& r) {
  return {{"schema", kEvalSchema},
          {"kind", "babe"},
          {"threshold", r.threshold},
          {"total", r.total},
          {"failed", r.failed},
          {"confusion_matrix",
           {{"tp", r.matrix.tp}, {"fp", r.matrix.fp}, {"fn", r.matrix.fn}, {"tn", r.matrix.tn}}},
          {"metrics", metrics_json(r.metrics)}};
}

Json bench_to_json(const std::vector<BenchResult>& results, std::size_t trials) {
  Json cases = Json::array();
  for (const auto& r : results)
    cases.push_back({{"name", r.bench_case.name},
                     {"sentences", r.sentences},
                     {"words", r.words},
                     {"stats", stats_json(r.stats)}});
  return {{"schema", kEvalSchema}, {"kind", "bench"}, {"trials", trials}, {"cases", cases}};
}

std::string format_table(const CrowsReport& r) {
  std::size_t w = std::string("bias_type").size();
  for (const auto& t : r.per_type) w = std::max(w, t.bias_type.size());
  w = std::max<std::size_t>(w, 7);
  std::ostringstream out;
  out << pad_right("bias_type", w) << "  " << pad_left("pairs", 6) << "  " << pad_left("SS%", 7)
      << '\n';
  out << std::string(w + 17, '-') << '\n';
  for (const auto& t : r.per_type)
    out << pad_right(t.bias_type, w) << "  " << pad_left(std::to_string(t.pairs), 6) << "  "
        << pad_left(format_percentage(t.ss), 7) << '\n';
  out << std::string(w + 17, '-') << '\n';
  out << pad_right("overall", w) << "  " << pad_left(std::to_string(r.evaluated_pairs), 6) << "  "
      << pad_left(format_percentage(r.ss), 7) << '\n';
  out << "failed pairs: " << r.failed_pairs << '\n';
  out << "avg latency (s): " << fixed(r.mean_latency_s, 4) << '\n';
  return out.str();
}

std::string format_table(const BabeReport& r) {
  const auto& m = r.matrix;
  std::ostringstream out;
  out << "threshold: " << fixed(r.threshold, 2) << "  evaluated: " << m.total()
      << "  failed: " << r.failed << '\n'
      << '\n'
      << pad_right("", 14) << pad_left("pred biased", 12) << pad_left("pred unbiased", 15) << '\n'
      << pad_right("gold biased", 14) << pad_left(std::to_string(m.tp), 12)
      << pad_left(std::to_string(m.fn), 15) << '\n'
      << pad_right("gold unbiased", 14) << pad_left(std::to_string(m.fp), 12)
      << pad_left(std::to_string(m.tn), 15) << '\n'
      << '\n';
  const auto row = [&](const char* name, double v, bool undefined) {
    out << pad_right(name, 11) << pad_left(format_percentage(v), 7)
        << (undefined ? "  (undefined)" : "") << '\n';
  };
  row("accuracy", r.metrics.accuracy, false);
  row("precision", r.metrics.precision, r.metrics.precision_undefined);
  row("recall", r.metrics.recall, r.metrics.recall_undefined);
  row("f1", r.metrics.f1, r.metrics.f1_undefined);
  return out.str();
}

std::string format_bench_table(const std::vector<BenchResult>& results) {
  std::size_t w = 4;
  for (const auto& r : results) w = std::max(w, r.bench_case.name.size());
  std::ostringstream out;
  out << pad_right("case", w) << pad_left("sents", 7) << pad_left("words", 7)
      << pad_left("mean", 10) << pad_left("median", 10) << pad_left("min", 10)
      << pad_left("max", 10) << pad_left("std", 10) << pad_left("success%", 10) << '\n';
  for (const auto& r : results) {
    out << pad_right(r.bench_case.name, w) << pad_left(std::to_string(r.sentences), 7)
        << pad_left(std::to_string(r.words), 7);
    if (r.stats.summary) {
      const auto& s = *r.stats.summary;
      for (double v : {s.mean, s.median, s.min, s.max, s.std}) out << pad_left(fixed(v, 4), 10);
    } else {
      for (int i = 0; i < 5; ++i) out << pad_left("-", 10);
    }
    out << pad_left(format_percentage(r.stats.success_rate), 10) << '\n';
  }
  out << "latencies in seconds\n";
  return out.str();
}

}  // namespace biasscope
