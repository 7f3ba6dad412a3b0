// biasscope: serve the API, analyze text, and run the benchmark suite.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "biasscope/eval.hpp"
#include "biasscope/normalizer.hpp"
#include "biasscope/pipeline.hpp"
#include "biasscope/server.hpp"

namespace bs = biasscope;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct BackendFlags {
  std::string mock;
  std::string endpoint;
  std::string classifier_endpoint;
  std::string token;
};

void add_backend_flags(CLI::App& cmd, BackendFlags& f) {
  auto* mock = cmd.add_option("--mock", f.mock, "Lexicon file for the offline mock backend");
  auto* endpoint = cmd.add_option("--endpoint", f.endpoint, "Bias detection endpoint URL");
  mock->excludes(endpoint);
  cmd.add_option("--classifier-endpoint", f.classifier_endpoint,
                 "Bias-type classification endpoint URL (defaults to BIAS_CLASSIFIER_URL)");
  cmd.add_option("--token", f.token, "Bearer token for remote endpoints (defaults to BIAS_API_TOKEN)");
}

std::shared_ptr<const bs::Backend> remote(const std::string& url, const BackendFlags& f) {
  bs::EndpointConfig cfg;
  cfg.url = url;
  if (!f.token.empty())
    cfg.auth_token = f.token;
  else if (auto env = bs::process_env("BIAS_API_TOKEN"); env && !env->empty())
    cfg.auth_token = *env;
  cfg.validate();
  return bs::make_backend(cfg);
}

/// Detector and classifier from flags, falling back to the environment.
bs::PipelineConfig pipeline_from(const BackendFlags& f, std::size_t in_flight) {
  bs::PipelineConfig cfg;
  cfg.max_in_flight = in_flight;
  if (!f.mock.empty()) {
    cfg.detector = bs::make_backend(bs::MockLexiconPath{f.mock});
    cfg.classifier = cfg.detector;
  } else {
    std::string url = f.endpoint;
    if (url.empty()) url = bs::process_env("BIAS_DETECTOR_URL").value_or("");
    if (url.empty()) throw UsageError("no detector configured; pass --mock LEXICON or --endpoint URL");
    cfg.detector = remote(url, f);
  }
  std::string curl = f.classifier_endpoint;
  if (curl.empty() && f.mock.empty()) curl = bs::process_env("BIAS_CLASSIFIER_URL").value_or("");
  if (!curl.empty()) cfg.classifier = remote(curl, f);
  return cfg;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bs::Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_out(const std::string& path, const bs::Json& doc) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bs::Error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::string report_table(const bs::BiasReport& r) {
  std::ostringstream out;
  char buf[64];
  out << "sentences: " << r.total_sentences << "  biased: " << r.biased_count
      << "  failed: " << r.failed_count << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", r.bias_ratio);
  out << "bias ratio: " << buf << " (" << bs::format_percentage(bs::bias_percentage(r)) << "%)\n";
  std::snprintf(buf, sizeof buf, "%.4f", r.avg_bias_score);
  out << "avg score: " << buf << '\n';
  out << "type counts:";
  if (r.type_counts.empty()) out << " none";
  for (const auto& [label, n] : r.type_counts) out << ' ' << label << '=' << n;
  out << "\n\n";
  out << "  #   score  biased  type                  sentence\n";
  std::size_t i = 0;
  for (const auto& s : r.sentences) {
    ++i;
    std::string score = "-";
    if (s.score()) {
      std::snprintf(buf, sizeof buf, "%.4f", s.score()->value());
      score = buf;
    }
    std::string type = "-";
    if (s.bias_type()) type = s.bias_type()->top_label();
    if (s.status() == bs::AnalysisStatus::DetectionFailed) type = "(detection failed)";
    if (s.status() == bs::AnalysisStatus::ClassificationFailed) type = "(type unavailable)";
    std::snprintf(buf, sizeof buf, "%3zu  %6s  %-6s  %-20s  ", i, score.c_str(),
                  s.is_biased() ? "yes" : "no", type.c_str());
    out << buf << s.sentence().text << '\n';
  }
  return out.str();
}

int run_serve(const std::string& config_path, std::optional<int> port, const std::string& host,
              const std::string& static_dir, const std::string& mock) {
  bs::ServerConfig cfg = config_path.empty() ? bs::ServerConfig{} : bs::load_server_config(config_path);
  bs::apply_env(cfg);
  if (port) cfg.port = *port;
  if (!host.empty()) cfg.host = host;
  if (!static_dir.empty()) cfg.static_dir = static_dir;
  if (!mock.empty()) {
    cfg.detector = bs::MockLexiconPath{mock};
    cfg.classifier = bs::MockLexiconPath{mock};
  }
  bs::Server server(cfg);
  const int bound = server.start();
  std::cout << "biasscope listening on http://" << cfg.host << ':' << bound << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::cerr << "shutting down\n";
  server.stop();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentence-level bias analysis and comparison for LLM output"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "biasscope 0.1.0");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string config_path, host, static_dir, serve_mock;
  std::optional<int> port;
  serve->add_option("--config", config_path, "Server config file (JSON)");
  serve->add_option("--port", port, "Listen port; 0 picks a free one")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address (default 127.0.0.1)");
  serve->add_option("--static-dir", static_dir, "Directory of web assets served at /");
  serve->add_option("--mock", serve_mock, "Use a lexicon mock for detection and classification");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Analyze one text");
  std::string text, file;
  bool analyze_json = false;
  BackendFlags analyze_backends;
  auto* text_opt = analyze->add_option("--text", text, "Text to analyze");
  auto* file_opt = analyze->add_option("--file", file, "Read the text from a file");
  text_opt->excludes(file_opt);
  analyze->add_flag("--json", analyze_json, "Print the report as JSON");
  add_backend_flags(*analyze, analyze_backends);

  // eval
  auto* eval = app.add_subcommand("eval", "Run a benchmark dataset");
  eval->require_subcommand(1);
  std::string data, out_path;
  bool eval_json = false;
  double threshold = bs::kBiasThreshold;
  std::size_t parallel = 1;
  BackendFlags eval_backends;
  auto* crows = eval->add_subcommand("crows", "CrowS-Pairs stereotype score");
  auto* babe = eval->add_subcommand("babe", "BABE binary detection metrics");
  for (auto* cmd : {crows, babe}) {
    cmd->add_option("--data", data, "Dataset file")->required();
    cmd->add_option("--out", out_path, "Also write the JSON report here");
    cmd->add_option("--parallel", parallel, "Concurrent detector calls")->check(CLI::PositiveNumber);
    cmd->add_flag("--json", eval_json, "Print JSON instead of a table");
    add_backend_flags(*cmd, eval_backends);
  }
  babe->add_option("--threshold", threshold, "Decision threshold in [0, 1]")->check(CLI::Range(0.0, 1.0));

  // bench
  auto* bench = app.add_subcommand("bench", "Latency benchmark of the full pipeline");
  std::size_t trials = 5;
  std::string cases_path, bench_out;
  bool bench_json = false;
  BackendFlags bench_backends;
  bench->add_option("--trials", trials, "Trials per case")->check(CLI::PositiveNumber);
  bench->add_option("--cases", cases_path, "JSON array of {name, text}");
  bench->add_option("--out", bench_out, "Also write the JSON report here");
  bench->add_flag("--json", bench_json, "Print JSON instead of a table");
  add_backend_flags(*bench, bench_backends);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*serve) return run_serve(config_path, port, host, static_dir, serve_mock);

    if (*analyze) {
      if (text_opt->count() == 0 && file_opt->count() == 0)
        throw UsageError("pass exactly one of --text or --file");
      const auto cfg = pipeline_from(analyze_backends, bs::kDefaultMaxInFlight);
      const std::string input = file_opt->count() ? read_text_file(file) : text;
      const bs::BiasReport report = bs::analyze(input, cfg);
      if (analyze_json)
        std::cout << bs::Json(report).dump(2) << '\n';
      else
        std::cout << report_table(report);
      return kOk;
    }

    if (*crows) {
      const auto cfg = pipeline_from(eval_backends, parallel);
      const auto pairs = bs::load_crows(data);
      const auto report = bs::run_crows(pairs, *cfg.detector, parallel);
      const bs::Json doc = bs::to_json(report);
      write_out(out_path, doc);
      std::cout << (eval_json ? doc.dump(2) + "\n" : bs::format_table(report));
      return kOk;
    }

    if (*babe) {
      const auto cfg = pipeline_from(eval_backends, parallel);
      const auto examples = bs::load_babe(data);
      const auto report = bs::run_babe(examples, *cfg.detector, threshold, parallel);
      const bs::Json doc = bs::to_json(report);
      write_out(out_path, doc);
      std::cout << (eval_json ? doc.dump(2) + "\n" : bs::format_table(report));
      return kOk;
    }

    if (*bench) {
      const auto cfg = pipeline_from(bench_backends, bs::kDefaultMaxInFlight);
      const auto cases = cases_path.empty() ? bs::builtin_bench_cases() : bs::load_bench_cases(cases_path);
      const auto results = bs::run_latency_bench(cases, trials, cfg);
      const bs::Json doc = bs::bench_to_json(results, trials);
      write_out(bench_out, doc);
      std::cout << (bench_json ? doc.dump(2) + "\n" : bs::format_bench_table(results));
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "biasscope: " << e.what() << '\n';
    return kUsage;
  } catch (const bs::ConfigError& e) {
    std::cerr << "biasscope: config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "biasscope: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
