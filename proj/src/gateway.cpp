#include "biasscope/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "biasscope/sse.hpp"
#include "biasscope/url.hpp"
#include "http_client.hpp"
#include "text_util.hpp"

namespace biasscope {

namespace {

constexpr std::chrono::milliseconds kProviderTimeout{60000};
constexpr std::size_t kMaxErrorBody = 4096;

// Splits UTF-8 text into code points.
std::vector<std::string_view> code_points(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> mock_chunks(const MockProviderConfig& cfg, std::string_view text) {
  const auto cps = code_points(text);
  const std::size_t max_len = std::max<std::size_t>(cfg.chunk_size, 1);
  std::mt19937 rng(cfg.chunk_seed.value_or(0));
  std::uniform_int_distribution<std::size_t> dist(1, max_len);
  std::vector<std::string> chunks;
  std::size_t i = 0;
  while (i < cps.size()) {
    const std::size_t len = cfg.chunk_seed ? dist(rng) : max_len;
    std::string chunk;
    for (std::size_t k = 0; k < len && i < cps.size(); ++k, ++i) chunk.append(cps[i]);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

std::string last_user_message(const std::vector<ChatTurn>& history) {
  for (auto it = history.rbegin(); it != history.rend(); ++it)
    if (it->role() == Role::User) return it->content();
  return {};
}

using Emit = std::function<bool(TokenEvent)>;

bool sleep_unless_cancelled(std::chrono::milliseconds d, CancelToken* cancel) {
  const auto until = std::chrono::steady_clock::now() + d;
  while (std::chrono::steady_clock::now() < until) {
    if (cancel && cancel->cancelled()) return false;
    std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(
        std::chrono::milliseconds(5),
        std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now()) +
            std::chrono::milliseconds(1)));
  }
  return !(cancel && cancel->cancelled());
}

void stream_mock(const MockProviderConfig& cfg, const std::vector<ChatTurn>& history,
                 const Emit& emit, CancelToken* cancel, ProviderStats& stats) {
  const std::string prompt = last_user_message(history);
  auto scripted = cfg.script.find(prompt);
  const std::string response = scripted != cfg.script.end() ? scripted->second : prompt;
  const auto chunks = mock_chunks(cfg, response);
  std::string full;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (cfg.fail_after_chunks && i == *cfg.fail_after_chunks) {
      ++stats.failed;
      emit(TokenStreamError{"mock provider fault injected after " + std::to_string(i) + " chunks"});
      return;
    }
    if (cfg.chunk_delay.count() > 0 && !sleep_unless_cancelled(cfg.chunk_delay, cancel)) {
      ++stats.cancelled;
      return;
    }
    if ((cancel && cancel->cancelled()) || !emit(TokenDelta{chunks[i]})) {
      ++stats.cancelled;
      return;
    }
    full += chunks[i];
  }
  if (cfg.fail_after_chunks && *cfg.fail_after_chunks >= chunks.size()) {
    ++stats.failed;
    emit(TokenStreamError{"mock provider fault injected after " + std::to_string(chunks.size()) +
                          " chunks"});
    return;
  }
  ++stats.completed;
  emit(TokenDone{cfg.finish_reason, std::move(full)});
}

std::string provider_error_message(int status, const std::string& body) {
  std::string msg = status != 0 ? "provider returned HTTP " + std::to_string(status)
                                : std::string("provider reported an error");
  try {
    const Json j = Json::parse(body);
    if (j.contains("error")) {
      const Json& e = j["error"];
      if (e.is_object() && e.contains("message") && e["message"].is_string())
        msg += ": " + e["message"].get<std::string>();
      else if (e.is_string())
        msg += ": " + e.get<std::string>();
    }
  } catch (const Json::exception&) {
  }
  return msg;
}

void stream_openai(const ProviderConfig& p, const ProviderModel& model,
                   const std::vector<ChatTurn>& history, const ChatParams& params,
                   const Emit& emit, CancelToken* cancel, ProviderStats& stats) {
  const ParsedUrl url = parse_url(p.base_url);
  auto client = detail::make_client(url, kProviderTimeout);
  client->set_keep_alive(false);

  Json messages = Json::array();
  for (const auto& turn : history)
    messages.push_back(Json{{"role", std::string(to_string(turn.role()))}, {"content", turn.content()}});

  httplib::Request req;
  req.method = "POST";
  req.path = join_path(url.path, "chat/completions");
  req.body = Json{{"model", model.model_id},
                  {"messages", std::move(messages)},
                  {"stream", true},
                  {"temperature", params.temperature},
                  {"max_tokens", params.max_tokens}}
                 .dump();
  req.set_header("Content-Type", "application/json");
  req.set_header("Accept", "text/event-stream");
  if (!p.api_key.empty()) req.set_header("Authorization", "Bearer " + p.api_key);
  for (const auto& [k, v] : p.extra_headers) req.set_header(k, v);

  int status = 0;
  std::string error_body;
  SseParser parser;
  std::string full;
  std::string finish_reason;
  bool saw_done = false;
  bool consumer_gone = false;
  std::optional<std::string> stream_error;

  req.response_handler = [&](const httplib::Response& r) {
    status = r.status;
    return true;
  };
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    if (status < 200 || status >= 300) {
      error_body.append(data, std::min(len, kMaxErrorBody - std::min(kMaxErrorBody, error_body.size())));
      return true;
    }
    for (const auto& ev : parser.feed(std::string_view(data, len))) {
      if (ev.data == "[DONE]") {
        saw_done = true;
        return false;
      }
      Json chunk;
      try {
        chunk = Json::parse(ev.data);
      } catch (const Json::parse_error&) {
        stream_error = "provider sent a malformed stream chunk";
        return false;
      }
      if (chunk.contains("error")) {
        stream_error = provider_error_message(0, chunk.dump());
        return false;
      }
      const auto choices = chunk.find("choices");
      if (choices == chunk.end() || !choices->is_array() || choices->empty()) continue;
      const Json& choice = (*choices)[0];
      if (auto delta = choice.find("delta"); delta != choice.end() && delta->is_object()) {
        if (auto content = delta->find("content"); content != delta->end() && content->is_string()) {
          std::string text = content->get<std::string>();
          if (!text.empty()) {
            full += text;
            if (!emit(TokenDelta{std::move(text)})) {
              consumer_gone = true;
              return false;
            }
          }
        }
      }
      if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string())
        finish_reason = fr->get<std::string>();
    }
    return true;
  };

  if (cancel) cancel->on_cancel([c = client.get()] { c->stop(); });
  ++stats.started;
  auto res = client->send(req);
  if (cancel) cancel->on_cancel({});

  if (consumer_gone || (cancel && cancel->cancelled())) {
    ++stats.cancelled;
    return;
  }
  if (status != 0 && (status < 200 || status >= 300)) {
    ++stats.failed;
    emit(TokenStreamError{provider_error_message(status, error_body)});
    return;
  }
  if (stream_error) {
    ++stats.failed;
    emit(TokenStreamError{*stream_error});
    return;
  }
  if (saw_done || !finish_reason.empty()) {
    ++stats.completed;
    emit(TokenDone{finish_reason.empty() ? "stop" : finish_reason, std::move(full)});
    return;
  }
  ++stats.failed;
  if (!res)
    emit(TokenStreamError{"provider request failed: " + httplib::to_string(res.error())});
  else
    emit(TokenStreamError{"provider stream ended before completion"});
}

// ---------------------------------------------------------------------------
// Registry parsing

const Json* opt(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string req_string(const Json& obj, const char* key, const std::string& where) {
  const Json* v = opt(obj, key);
  if (v == nullptr || !v->is_string())
    throw ConfigError(key, 0, where + ": '" + key + "' must be a string");
  return v->get<std::string>();
}

MockProviderConfig parse_mock(const Json& j, const std::string& where,
                              const std::filesystem::path& base_dir) {
  MockProviderConfig m;
  if (!j.is_object()) throw ConfigError("mock", 0, where + ": 'mock' must be an object");
  if (const Json* v = opt(j, "chunk_size")) {
    if (!v->is_number_unsigned() || v->get<std::size_t>() == 0)
      throw ConfigError("chunk_size", 0, where + ": 'chunk_size' must be a positive integer");
    m.chunk_size = v->get<std::size_t>();
  }
  if (const Json* v = opt(j, "chunk_seed")) {
    if (!v->is_number_unsigned())
      throw ConfigError("chunk_seed", 0, where + ": 'chunk_seed' must be a non-negative integer");
    m.chunk_seed = v->get<std::uint32_t>();
  }
  if (const Json* v = opt(j, "fail_after_chunks")) {
    if (!v->is_number_unsigned())
      throw ConfigError("fail_after_chunks", 0,
                        where + ": 'fail_after_chunks' must be a non-negative integer");
    m.fail_after_chunks = v->get<std::size_t>();
  }
  if (const Json* v = opt(j, "chunk_delay_ms")) {
    if (!v->is_number_unsigned())
      throw ConfigError("chunk_delay_ms", 0, where + ": 'chunk_delay_ms' must be a non-negative integer");
    m.chunk_delay = std::chrono::milliseconds(v->get<long long>());
  }
  if (const Json* v = opt(j, "finish_reason")) {
    if (!v->is_string()) throw ConfigError("finish_reason", 0, where + ": 'finish_reason' must be a string");
    m.finish_reason = v->get<std::string>();
  }
  auto load_script = [&](const Json& s, const char* key) {
    if (!s.is_object()) throw ConfigError(key, 0, where + ": '" + key + "' must map prompts to responses");
    for (const auto& [prompt, response] : s.items()) {
      if (!response.is_string())
        throw ConfigError(key, 0, where + ": responses in '" + key + "' must be strings");
      m.script[prompt] = response.get<std::string>();
    }
  };
  if (const Json* v = opt(j, "script_file")) {
    if (!v->is_string()) throw ConfigError("script_file", 0, where + ": 'script_file' must be a path");
    std::filesystem::path path = v->get<std::string>();
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("script_file", 0, where + ": cannot read script file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    Json script;
    try {
      script = Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
      throw ConfigError("script_file", detail::line_at_offset(buf.str(), e.byte),
                        where + ": script file " + path.string() + " is not valid JSON");
    }
    load_script(script, "script_file");
  }
  if (const Json* v = opt(j, "script")) load_script(*v, "script");
  return m;
}

}  // namespace

void ChatParams::validate() const {
  if (!std::isfinite(temperature) || temperature < 0.0 || temperature > 2.0)
    throw InvariantError("temperature must lie in [0, 2]");
  if (max_tokens < 1) throw InvariantError("max_tokens must be positive");
}

bool ProviderConfig::allows(std::string_view model_id) const {
  for (const auto& m : models)
    if (m.model_id == model_id) return true;
  return false;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

std::string interpolate_env(std::string_view text, const EnvLookup& env) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find("${", i);
    if (open == std::string_view::npos) break;
    const auto close = text.find('}', open + 2);
    if (close == std::string_view::npos) break;
    out.append(text.substr(i, open - i));
    const std::string name(text.substr(open + 2, close - open - 2));
    out += env(name).value_or("");
    i = close + 1;
  }
  out.append(text.substr(i));
  return out;
}

// Hooks run under the lock so that detaching with on_cancel({}) waits for a
// hook that is already running.
void CancelToken::cancel() {
  std::lock_guard lock(mutex_);
  cancelled_ = true;
  if (hook_) hook_();
}

void CancelToken::on_cancel(std::function<void()> fn) {
  std::lock_guard lock(mutex_);
  hook_ = std::move(fn);
  if (cancelled_ && hook_) hook_();
}

ProviderRegistry ProviderRegistry::from_json(const Json& doc, const EnvLookup& env,
                                             const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("providers", 0, "registry must be a JSON object");
  const Json* list = opt(doc, "providers");
  if (list == nullptr || !list->is_array())
    throw ConfigError("providers", 0, "registry needs a 'providers' array");
  ProviderRegistry reg;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const Json& p = (*list)[i];
    const std::string where = "providers[" + std::to_string(i) + "]";
    if (!p.is_object()) throw ConfigError("providers", 0, where + " must be an object");
    ProviderConfig cfg;
    cfg.provider_id = req_string(p, "id", where);
    std::string type = "openai";
    if (opt(p, "type")) type = req_string(p, "type", where);
    if (type != "openai" && type != "mock")
      throw ConfigError("type", 0, where + ": 'type' must be \"openai\" or \"mock\"");
    if (type == "openai") {
      cfg.base_url = interpolate_env(req_string(p, "base_url", where), env);
      if (opt(p, "api_key")) cfg.api_key = interpolate_env(req_string(p, "api_key", where), env);
    }
    const Json* models = opt(p, "models");
    if (models == nullptr || !models->is_array() || models->empty())
      throw ConfigError("models", 0, where + ": 'models' must be a non-empty array");
    for (const auto& m : *models) {
      if (m.is_string()) {
        cfg.models.push_back(ModelEntry{m.get<std::string>(), {}});
      } else if (m.is_object()) {
        ModelEntry e{req_string(m, "id", where + ".models"), {}};
        if (opt(m, "display_name")) e.display_name = req_string(m, "display_name", where + ".models");
        cfg.models.push_back(std::move(e));
      } else {
        throw ConfigError("models", 0, where + ": model entries must be strings or objects");
      }
    }
    if (const Json* h = opt(p, "extra_headers")) {
      if (!h->is_object()) throw ConfigError("extra_headers", 0, where + ": 'extra_headers' must be an object");
      for (const auto& [k, v] : h->items()) {
        if (!v.is_string()) throw ConfigError("extra_headers", 0, where + ": header values must be strings");
        cfg.extra_headers[k] = interpolate_env(v.get<std::string>(), env);
      }
    }
    if (type == "mock") cfg.mock = parse_mock(p.contains("mock") ? p["mock"] : Json::object(), where, base_dir);
    try {
      reg.add(std::move(cfg));
    } catch (const ConfigError& e) {
      throw ConfigError(e.key(), 0, where + ": " + e.what());
    }
  }
  return reg;
}

ProviderRegistry ProviderRegistry::from_file(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot read registry " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto line = detail::line_at_offset(text, e.byte);
    throw ConfigError("registry", line,
                      path.string() + ":" + std::to_string(line) + ": invalid JSON");
  }
  try {
    return from_json(doc, env, path.parent_path());
  } catch (const ConfigError& e) {
    const auto line = detail::line_of_key(text, e.key());
    throw ConfigError(e.key(), line,
                      path.string() + (line ? ":" + std::to_string(line) : "") + ": " + e.what());
  }
}

ProviderRegistry ProviderRegistry::builtin_mock() {
  ProviderRegistry reg;
  ProviderConfig cfg;
  cfg.provider_id = "mock";
  cfg.models.push_back(ModelEntry{"echo", "Mock echo"});
  cfg.mock = MockProviderConfig{};
  reg.add(std::move(cfg));
  return reg;
}

void ProviderRegistry::add(ProviderConfig config) {
  if (config.provider_id.empty()) throw ConfigError("id", 0, "provider id is empty");
  if (find(config.provider_id) != nullptr)
    throw ConfigError("id", 0, "duplicate provider id '" + config.provider_id + "'");
  if (config.models.empty())
    throw ConfigError("models", 0, "provider '" + config.provider_id + "' has no models");
  for (const auto& m : config.models)
    if (m.model_id.empty()) throw ConfigError("models", 0, "empty model id");
  if (!config.mock) {
    try {
      parse_url(config.base_url);
    } catch (const ConfigError&) {
      throw ConfigError("base_url", 0, "provider '" + config.provider_id + "' has an invalid base_url");
    }
  }
  stats_[config.provider_id] = std::make_unique<ProviderStats>();
  providers_.push_back(std::move(config));
}

const ProviderConfig* ProviderRegistry::find(std::string_view provider_id) const {
  for (const auto& p : providers_)
    if (p.provider_id == provider_id) return &p;
  return nullptr;
}

const ProviderConfig& ProviderRegistry::resolve(const ProviderModel& model) const {
  const ProviderConfig* p = find(model.provider_id);
  if (p == nullptr) throw UnknownModel("unknown provider '" + model.provider_id + "'");
  if (!p->allows(model.model_id))
    throw UnknownModel("model '" + model.model_id + "' is not offered by '" + model.provider_id + "'");
  return *p;
}

std::vector<ProviderModel> ProviderRegistry::list_models() const {
  std::vector<ProviderModel> out;
  for (const auto& p : providers_)
    for (const auto& m : p.models)
      out.push_back(ProviderModel::make(p.provider_id, m.model_id, m.display_name));
  return out;
}

ProviderStats& ProviderRegistry::stats(std::string_view provider_id) const {
  auto it = stats_.find(provider_id);
  if (it == stats_.end()) throw UnknownModel("unknown provider '" + std::string(provider_id) + "'");
  return *it->second;
}

std::string ProviderRegistry::scrub(std::string text) const {
  for (const auto& p : providers_) {
    if (p.api_key.empty()) continue;
    for (auto pos = text.find(p.api_key); pos != std::string::npos; pos = text.find(p.api_key, pos))
      text.replace(pos, p.api_key.size(), "[redacted]");
  }
  return text;
}

std::vector<ProviderModel> list_models(const ProviderRegistry& registry) {
  return registry.list_models();
}

void stream_chat(const ProviderRegistry& registry, const ProviderModel& model,
                 const std::vector<ChatTurn>& history, const ChatParams& params,
                 const TokenSink& sink, CancelToken* cancel) {
  const ProviderConfig& provider = registry.resolve(model);
  params.validate();
  ProviderStats& stats = registry.stats(provider.provider_id);

  bool terminated = false;
  const Emit emit = [&](TokenEvent ev) {
    if (terminated) return false;
    if (auto* err = std::get_if<TokenStreamError>(&ev)) err->message = registry.scrub(err->message);
    terminated = is_terminal(ev);
    return sink(ev);
  };

  try {
    if (provider.mock) {
      ++stats.started;
      stream_mock(*provider.mock, history, emit, cancel, stats);
    } else {
      stream_openai(provider, model, history, params, emit, cancel, stats);
    }
  } catch (const std::exception& e) {
    ++stats.failed;
    emit(TokenStreamError{std::string("provider stream failed: ") + e.what()});
  }
}

// ---------------------------------------------------------------------------
// TokenStream

TokenStream::TokenStream(std::shared_ptr<const ProviderRegistry> registry, ProviderModel model,
                         std::vector<ChatTurn> history, ChatParams params, std::size_t buffer)
    : state_(std::make_shared<State>()) {
  registry->resolve(model);
  params.validate();
  state_->capacity = std::max<std::size_t>(buffer, 1);
  producer_ = std::jthread([state = state_, registry = std::move(registry), model = std::move(model),
                            history = std::move(history), params] {
    auto sink = [&](const TokenEvent& ev) {
      std::unique_lock lock(state->mutex);
      state->writable.wait(lock, [&] { return state->queue.size() < state->capacity || state->cancelled; });
      if (state->cancelled) return false;
      state->queue.push_back(ev);
      state->readable.notify_one();
      return true;
    };
    stream_chat(*registry, model, history, params, sink, &state->token);
    std::lock_guard lock(state->mutex);
    state->producer_done = true;
    state->readable.notify_all();
  });
}

TokenStream::~TokenStream() { cancel(); }

void TokenStream::cancel() {
  {
    std::lock_guard lock(state_->mutex);
    if (state_->cancelled) return;
    state_->cancelled = true;
    state_->writable.notify_all();
    state_->readable.notify_all();
  }
  state_->token.cancel();
}

std::optional<TokenEvent> TokenStream::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(state_->mutex);
  state_->readable.wait_for(lock, timeout, [&] {
    return !state_->queue.empty() || state_->producer_done || state_->cancelled;
  });
  if (state_->queue.empty()) return std::nullopt;
  TokenEvent ev = std::move(state_->queue.front());
  state_->queue.pop_front();
  if (is_terminal(ev)) state_->terminal_taken = true;
  state_->writable.notify_one();
  return ev;
}

bool TokenStream::finished() const {
  std::lock_guard lock(state_->mutex);
  return state_->terminal_taken || (state_->producer_done && state_->queue.empty());
}

}  // namespace biasscope
