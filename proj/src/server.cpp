#include "biasscope/server.hpp"

#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "biasscope/comparison.hpp"
#include "biasscope/normalizer.hpp"
#include "biasscope/sse.hpp"
#include "text_util.hpp"

namespace biasscope {

namespace {

using namespace std::chrono_literals;

ApiResponse json_response(int status, const Json& body) { return {status, body.dump(), "application/json"}; }

ApiResponse error_response(int status, std::string_view message) {
  return {status, error_body(message), "application/json"};
}

std::optional<Json> parse_body(std::string_view body) {
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

// ---------------------------------------------------------------------------
// Config

const Json* find_key(const Json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

std::string config_string(const Json& j, const char* key) {
  if (!j.is_string()) throw ConfigError(key, 0, std::string("'") + key + "' must be a string");
  return j.get<std::string>();
}

long long config_int(const Json& j, const char* key, long long lo, long long hi) {
  if (!j.is_number_integer())
    throw ConfigError(key, 0, std::string("'") + key + "' must be an integer");
  const auto v = j.get<long long>();
  if (v < lo || v > hi)
    throw ConfigError(key, 0,
                      std::string("'") + key + "' must lie in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
  return v;
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

BackendSpec backend_from_json(const Json& j, const char* key, const std::filesystem::path& base) {
  if (j.is_string()) {
    EndpointConfig cfg;
    cfg.url = j.get<std::string>();
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(key, 0, std::string("'") + key + "': " + e.what());
    }
    return cfg;
  }
  if (!j.is_object())
    throw ConfigError(key, 0, std::string("'") + key + "' must be a URL string or an object");
  if (const Json* mock = find_key(j, "mock")) {
    if (j.size() != 1) throw ConfigError("mock", 0, "'mock' cannot be combined with endpoint keys");
    return MockLexiconPath{resolve_path(base, config_string(*mock, "mock"))};
  }
  EndpointConfig cfg;
  for (const auto& [k, v] : j.items()) {
    if (k == "url") cfg.url = config_string(v, "url");
    else if (k == "auth_token") cfg.auth_token = config_string(v, "auth_token");
    else if (k == "timeout_ms") cfg.timeout = std::chrono::milliseconds(config_int(v, "timeout_ms", 1, 600000));
    else if (k == "max_retries") cfg.max_retries = static_cast<int>(config_int(v, "max_retries", 0, 10));
    else if (k == "backoff_ms") cfg.backoff_base = std::chrono::milliseconds(config_int(v, "backoff_ms", 0, 60000));
    else throw ConfigError(k, 0, "unknown key '" + k + "' in '" + key + "'");
  }
  if (cfg.url.empty()) throw ConfigError("url", 0, std::string("'") + key + "' needs a 'url'");
  cfg.validate();
  return cfg;
}

std::optional<std::vector<ChatTurn>> parse_messages(const Json& messages, const ProviderModel& model) {
  if (!messages.is_array() || messages.empty()) return std::nullopt;
  std::vector<ChatTurn> out;
  for (const auto& m : messages) {
    if (!m.is_object() || !m.contains("role") || !m["role"].is_string() || !m.contains("content") ||
        !m["content"].is_string())
      return std::nullopt;
    const Role role = role_from_string(m["role"].get<std::string>());
    std::string content = m["content"].get<std::string>();
    switch (role) {
      case Role::User: out.push_back(ChatTurn::user(std::move(content))); break;
      case Role::System: out.push_back(ChatTurn::system(std::move(content))); break;
      case Role::Assistant: {
        ProviderModel who = m.contains("model") ? provider_model_from_json(m["model"]) : model;
        out.push_back(ChatTurn::assistant(std::move(content), std::move(who)));
        break;
      }
    }
  }
  return out;
}

void validate_column(const Json& session, const char* key, std::size_t& turns) {
  const Json* col = find_key(session, key);
  if (!col || !col->is_object()) throw InvariantError(std::string("'") + key + "' must be an object");
  if (const Json* model = find_key(*col, "model")) provider_model_from_json(*model);
  const Json* list = find_key(*col, "turns");
  if (!list || !list->is_array()) throw InvariantError(std::string(key) + ".turns must be an array");
  for (const auto& t : *list) chat_turn_from_json(t);
  turns += list->size();
  if (const Json* report = find_key(*col, "column_report")) bias_report_from_json(*report);
}

std::string sse_json(const Json& j) { return sse_data_frame(j.dump()); }

}  // namespace

ServerConfig server_config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("", 0, "config must be a JSON object");
  ServerConfig c;
  for (const auto& [key, v] : doc.items()) {
    if (v.is_null()) continue;
    if (key == "host") c.host = config_string(v, "host");
    else if (key == "port") c.port = static_cast<int>(config_int(v, "port", 0, 65535));
    else if (key == "static_dir") c.static_dir = resolve_path(base_dir, config_string(v, "static_dir"));
    else if (key == "cors_origins") {
      if (!v.is_array()) throw ConfigError("cors_origins", 0, "'cors_origins' must be an array");
      for (const auto& o : v) c.cors_origins.push_back(config_string(o, "cors_origins"));
    } else if (key == "detector") c.detector = backend_from_json(v, "detector", base_dir);
    else if (key == "classifier") c.classifier = backend_from_json(v, "classifier", base_dir);
    else if (key == "api_token") c.api_token = interpolate_env(config_string(v, "api_token"));
    else if (key == "polarity_overrides")
      c.polarity_overrides = resolve_path(base_dir, config_string(v, "polarity_overrides"));
    else if (key == "registry") c.registry = resolve_path(base_dir, config_string(v, "registry"));
    else if (key == "max_in_flight") c.max_in_flight = static_cast<std::size_t>(config_int(v, "max_in_flight", 1, 256));
    else if (key == "budget_ms") c.budget = std::chrono::milliseconds(config_int(v, "budget_ms", 1, 3600000));
    else if (key == "heartbeat_ms") c.heartbeat = std::chrono::milliseconds(config_int(v, "heartbeat_ms", 10, 3600000));
    else if (key == "stream_cap") c.stream_cap = static_cast<std::size_t>(config_int(v, "stream_cap", 1, 1024));
    else if (key == "health_ttl_s") c.health_ttl = std::chrono::seconds(config_int(v, "health_ttl_s", 0, 30));
    else if (key == "max_text_bytes") c.max_text_bytes = static_cast<std::size_t>(config_int(v, "max_text_bytes", 1, 64 << 20));
    else throw ConfigError(key, 0, "unknown key '" + key + "'");
  }
  return c;
}

ServerConfig load_server_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto line = detail::line_at_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError("", line, path.string() + ":" + std::to_string(line) + ": invalid JSON");
  }
  try {
    return server_config_from_json(doc, path.parent_path());
  } catch (const ConfigError& e) {
    const auto line = e.key().empty() ? 0 : detail::line_of_key(text, e.key());
    throw ConfigError(e.key(), line,
                      path.string() + (line ? ":" + std::to_string(line) : "") + ": " + e.what());
  }
}

void apply_env(ServerConfig& config, const EnvLookup& env) {
  if (auto port = env("PORT"); port && !port->empty()) {
    try {
      std::size_t used = 0;
      const int p = std::stoi(*port, &used);
      if (used != port->size() || p < 0 || p > 65535) throw std::out_of_range("port");
      config.port = p;
    } catch (const std::exception&) {
      throw ConfigError("PORT", 0, "PORT must be an integer in [0, 65535]");
    }
  }
  const auto endpoint = [&](const char* var, std::optional<BackendSpec>& slot) {
    auto url = env(var);
    if (!url || url->empty()) return;
    EndpointConfig cfg;
    if (slot)
      if (const auto* existing = std::get_if<EndpointConfig>(&*slot)) cfg = *existing;
    cfg.url = *url;
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(var, 0, std::string(var) + ": " + e.what());
    }
    slot = cfg;
  };
  endpoint("BIAS_DETECTOR_URL", config.detector);
  endpoint("BIAS_CLASSIFIER_URL", config.classifier);
  if (auto token = env("BIAS_API_TOKEN"); token && !token->empty()) config.api_token = *token;
}

std::string error_body(std::string_view message) {
  return Json{{"error", std::string(message)}}.dump();
}

std::string format_rfc3339(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Handlers

ApiService::ApiService(std::shared_ptr<const ProviderRegistry> registry, PipelineConfig pipeline,
                       ServiceOptions options)
    : registry_(std::move(registry)),
      pipeline_(std::move(pipeline)),
      options_(std::move(options)),
      health_(std::make_shared<HealthCache>()) {
  if (!registry_) registry_ = std::make_shared<const ProviderRegistry>();
  for (const auto& m : registry_->list_models())
    streams_.try_emplace(m.provider_id, std::make_shared<std::atomic<std::size_t>>(0));
}

ApiResponse ApiService::analyze(std::string_view body) const {
  const auto req = parse_body(body);
  if (!req) return error_response(400, "request body must be a JSON object");
  const Json* text = find_key(*req, "text");
  if (!text || !text->is_string()) return error_response(400, "'text' must be a string");
  const Json* source = find_key(*req, "source");
  if (!source || !source->is_string() ||
      (source->get<std::string>() != "prompt" && source->get<std::string>() != "response"))
    return error_response(400, "'source' must be \"prompt\" or \"response\"");
  if (const Json* model = find_key(*req, "model")) {
    try {
      provider_model_from_json(*model);
    } catch (const std::exception& e) {
      return error_response(400, std::string("invalid 'model': ") + e.what());
    }
  }
  const auto& s = text->get_ref<const std::string&>();
  if (s.size() > options_.max_text_bytes)
    return error_response(413, "text exceeds " + std::to_string(options_.max_text_bytes) + " bytes");

  const BiasReport report = biasscope::analyze(s, pipeline_);
  if (report.total_sentences > 0 && report.failed_count == report.total_sentences)
    return json_response(502, Json{{"error", "bias detection endpoint unavailable"}, {"report", report}});
  return json_response(200, report);
}

ApiResponse ApiService::compare(std::string_view body) const {
  const auto req = parse_body(body);
  if (!req) return error_response(400, "request body must be a JSON object");
  for (const char* key : {"model_a", "report_a", "model_b", "report_b"})
    if (!find_key(*req, key)) return error_response(400, std::string("missing '") + key + "'");
  try {
    const ComparisonReport c =
        biasscope::compare(provider_model_from_json((*req)["model_a"]), bias_report_from_json((*req)["report_a"]),
                           provider_model_from_json((*req)["model_b"]), bias_report_from_json((*req)["report_b"]));
    return json_response(200, c);
  } catch (const std::exception& e) {
    return error_response(400, e.what());
  }
}

ApiResponse ApiService::models() const {
  Json out = Json::array();
  for (const auto& m : registry_->list_models()) out.push_back(m);
  return json_response(200, out);
}

ApiResponse ApiService::export_session(std::string_view body) const {
  const auto session = parse_body(body);
  if (!session) return error_response(400, "session must be a JSON object");
  if (session->empty()) return error_response(400, "session is empty");
  try {
    std::size_t turns = 0;
    validate_column(*session, "column_a", turns);
    validate_column(*session, "column_b", turns);
    if (const Json* reports = find_key(*session, "prompt_reports")) {
      if (!reports->is_array()) throw InvariantError("'prompt_reports' must be an array");
      for (const auto& r : *reports) bias_report_from_json(r);
    }
    if (const Json* cmp = find_key(*session, "comparison")) comparison_report_from_json(*cmp);
    if (turns == 0) return error_response(400, "session is empty");
  } catch (const std::exception& e) {
    return error_response(400, std::string("session does not match ") + kSessionSchema + ": " + e.what());
  }
  return json_response(200, Json{{"schema", kSessionSchema},
                                 {"exported_at", format_rfc3339(options_.wall_clock())},
                                 {"session", *session}});
}

ApiResponse ApiService::health() {
  std::lock_guard lock(health_->mutex);
  const auto now = options_.steady_clock();
  if (!health_->checked_at || now - *health_->checked_at >= options_.health_ttl) {
    const auto probe = [](const std::shared_ptr<const Backend>& b) {
      try {
        return b && b->probe();
      } catch (const std::exception&) {
        return false;
      }
    };
    health_->detector = probe(pipeline_.detector);
    health_->classifier = probe(pipeline_.classifier);
    health_->checked_at = now;
  }
  return json_response(200, Json{{"status", health_->detector && health_->classifier ? "ok" : "degraded"},
                                 {"detector_reachable", health_->detector},
                                 {"classifier_reachable", health_->classifier}});
}

std::variant<ChatRequest, ApiResponse> ApiService::parse_chat(std::string_view body) const {
  const auto req = parse_body(body);
  if (!req) return error_response(400, "request body must be a JSON object");
  const Json* model_json = find_key(*req, "model");
  if (!model_json) return error_response(400, "missing 'model'");
  std::optional<ProviderModel> model;
  std::optional<std::vector<ChatTurn>> messages;
  ChatParams params;
  try {
    model = provider_model_from_json(*model_json);
    const Json* msgs = find_key(*req, "messages");
    if (msgs) messages = parse_messages(*msgs, *model);
    if (const Json* p = find_key(*req, "params")) {
      if (!p->is_object()) return error_response(400, "'params' must be an object");
      if (const Json* t = find_key(*p, "temperature")) {
        if (!t->is_number()) return error_response(400, "'temperature' must be a number");
        params.temperature = t->get<double>();
      }
      if (const Json* m = find_key(*p, "max_tokens")) {
        if (!m->is_number_integer()) return error_response(400, "'max_tokens' must be an integer");
        params.max_tokens = m->get<int>();
      }
    }
    params.validate();
  } catch (const std::exception& e) {
    return error_response(400, e.what());
  }
  if (!messages) return error_response(400, "'messages' must be a non-empty array of {role, content}");
  if (messages->back().role() != Role::User)
    return error_response(400, "the last message must come from the user");
  try {
    const ProviderConfig& provider = registry_->resolve(*model);
    if (model->display_name == model->provider_id + "/" + model->model_id)
      for (const auto& m : provider.models)
        if (m.model_id == model->model_id && !m.display_name.empty()) model->display_name = m.display_name;
  } catch (const UnknownModel& e) {
    return error_response(404, e.what());
  }
  return ChatRequest{std::move(*model), std::move(*messages), params};
}

std::shared_ptr<void> ApiService::acquire_stream(const std::string& provider_id) {
  const auto it = streams_.find(provider_id);
  if (it == streams_.end()) return {};
  auto counter = it->second;
  std::size_t current = counter->load();
  do {
    if (current >= options_.stream_cap) return {};
  } while (!counter->compare_exchange_weak(current, current + 1));
  return std::shared_ptr<void>(counter.get(), [counter](void*) { --*counter; });
}

std::shared_ptr<ApiService> make_service(const ServerConfig& config, ServiceOptions options) {
  PolarityTable polarity = PolarityTable::defaults();
  if (config.polarity_overrides) polarity.load_overrides_file(*config.polarity_overrides);
  const auto build = [&](const std::optional<BackendSpec>& spec) -> std::shared_ptr<const Backend> {
    if (!spec) return nullptr;
    if (const auto* remote = std::get_if<EndpointConfig>(&*spec)) {
      EndpointConfig cfg = *remote;
      if (!cfg.auth_token && config.api_token) cfg.auth_token = config.api_token;
      cfg.validate();
      return std::make_shared<RemoteBackend>(cfg, polarity);
    }
    return make_backend(*spec);
  };
  PipelineConfig pipeline;
  pipeline.detector = build(config.detector);
  pipeline.classifier = build(config.classifier);
  pipeline.max_in_flight = config.max_in_flight;
  pipeline.budget = config.budget;

  auto registry = config.registry
                      ? std::make_shared<const ProviderRegistry>(ProviderRegistry::from_file(*config.registry))
                      : std::make_shared<const ProviderRegistry>(ProviderRegistry::builtin_mock());
  options.stream_cap = config.stream_cap;
  options.health_ttl = config.health_ttl;
  options.max_text_bytes = config.max_text_bytes;
  return std::make_shared<ApiService>(std::move(registry), std::move(pipeline), std::move(options));
}

// ---------------------------------------------------------------------------
// HTTP glue

struct Server::Impl {
  httplib::Server http;
  std::thread thread;
};

Server::Server(ServerConfig config) : Server(config, make_service(config)) {}

Server::Server(ServerConfig config, std::shared_ptr<ApiService> service)
    : config_(std::move(config)), service_(std::move(service)), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  auto svc = service_;
  const auto heartbeat = config_.heartbeat;
  const auto origins = config_.cors_origins;

  http.new_task_queue = [] { return new httplib::ThreadPool(32); };
  // httplib also sets SO_REUSEPORT, which would let a second server share the port.
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });
  http.set_payload_max_length(std::max<std::size_t>(config_.max_text_bytes * 8, 1 << 20));

  const auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };

  http.Post("/api/analyze", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->analyze(req.body));
  });
  http.Post("/api/compare", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->compare(req.body));
  });
  http.Get("/api/models", [svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc->models());
  });
  http.Post("/api/export", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->export_session(req.body));
  });
  http.Get("/health", [svc, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, svc->health());
  });

  http.Post("/api/chat", [svc, reply, heartbeat](const httplib::Request& req, httplib::Response& res) {
    auto parsed = svc->parse_chat(req.body);
    if (auto* err = std::get_if<ApiResponse>(&parsed)) return reply(res, *err);
    auto& chat = std::get<ChatRequest>(parsed);
    auto slot = svc->acquire_stream(chat.model.provider_id);
    if (!slot) return reply(res, error_response(429, "too many concurrent streams for provider '" +
                                                         chat.model.provider_id + "'"));
    std::shared_ptr<TokenStream> stream;
    try {
      stream = std::make_shared<TokenStream>(svc->registry(), chat.model, std::move(chat.messages),
                                             chat.params);
    } catch (const UnknownModel& e) {
      return reply(res, error_response(404, e.what()));
    } catch (const std::exception& e) {
      return reply(res, error_response(400, e.what()));
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    const auto poll = std::min<std::chrono::milliseconds>(50ms, heartbeat);
    auto last_write = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    res.set_chunked_content_provider(
        "text/event-stream",
        [stream, slot, heartbeat, poll, last_write](std::size_t, httplib::DataSink& sink) {
          if (!sink.is_writable()) {
            stream->cancel();
            return false;
          }
          const auto ev = stream->next(poll);
          const auto write = [&](const std::string& frame) {
            *last_write = std::chrono::steady_clock::now();
            return sink.write(frame.data(), frame.size());
          };
          if (!ev) {
            if (stream->finished()) {
              sink.done();
              return true;
            }
            if (std::chrono::steady_clock::now() - *last_write >= heartbeat &&
                !write(sse_comment_frame("keepalive"))) {
              stream->cancel();
              return false;
            }
            return true;
          }
          std::string frame;
          if (const auto* d = std::get_if<TokenDelta>(&*ev))
            frame = sse_json({{"delta", d->text}});
          else if (const auto* done = std::get_if<TokenDone>(&*ev))
            frame = sse_json({{"done", true}, {"finish_reason", done->finish_reason}, {"full_text", done->full_text}});
          else
            frame = sse_json({{"error", std::get<TokenStreamError>(*ev).message}});
          if (!write(frame)) {
            stream->cancel();
            return false;
          }
          if (is_terminal(*ev)) sink.done();
          return true;
        },
        [stream](bool) { stream->cancel(); });
  });

  http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  http.set_post_routing_handler([origins](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_header("Origin") || origins.empty()) return;
    const std::string origin = req.get_header_value("Origin");
    const bool any = std::find(origins.begin(), origins.end(), "*") != origins.end();
    if (!any && std::find(origins.begin(), origins.end(), origin) == origins.end()) return;
    res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
    res.set_header("Vary", "Origin");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });

  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(error_body(what), "application/json");
  });

  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(error_body(httplib::status_message(res.status)), "application/json");
  });

  if (config_.static_dir && !http.set_mount_point("/", config_.static_dir->string()))
    throw ConfigError("static_dir", 0, "static_dir is not a directory: " + config_.static_dir->string());
}

Server::~Server() { stop(); }

int Server::start() {
  auto& http = impl_->http;
  if (config_.port == 0) {
    port_ = http.bind_to_any_port(config_.host);
  } else {
    port_ = http.bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ < 0) {
    port_ = 0;
    throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  http.wait_until_ready();
  return port_;
}

void Server::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace biasscope
