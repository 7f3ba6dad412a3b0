#pragma once

// Stateless HTTP service: chat streaming over SSE, bias analysis,
// comparison, model listing, session export and health.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biasscope/core_model.hpp"
#include "biasscope/gateway.hpp"
#include "biasscope/inference_client.hpp"
#include "biasscope/pipeline.hpp"

namespace biasscope {

inline constexpr const char* kSessionSchema = "biasscope-session/1";

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> static_dir;
  /// Origins allowed for cross-origin requests; empty means same-origin
  /// only, "*" allows any.
  std::vector<std::string> cors_origins;

  std::optional<BackendSpec> detector;
  std::optional<BackendSpec> classifier;
  /// Bearer token for endpoints that do not set their own.
  std::optional<std::string> api_token;
  std::optional<std::filesystem::path> polarity_overrides;
  /// Provider registry file; the builtin mock registry when unset.
  std::optional<std::filesystem::path> registry;

  std::size_t max_in_flight = kDefaultMaxInFlight;
  std::chrono::milliseconds budget{60000};
  std::chrono::milliseconds heartbeat{15000};
  std::size_t stream_cap = 4;  // concurrent chat streams per provider
  std::chrono::seconds health_ttl{30};
  std::size_t max_text_bytes = 100 * 1024;
};

/// Reads a JSON config file. Relative paths resolve against the file's
/// directory. Throws ConfigError naming the key and line.
ServerConfig load_server_config(const std::filesystem::path& path);
ServerConfig server_config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});

/// Applies PORT, BIAS_DETECTOR_URL, BIAS_CLASSIFIER_URL and BIAS_API_TOKEN.
void apply_env(ServerConfig& config, const EnvLookup& env = process_env);

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ChatRequest {
  ProviderModel model;
  std::vector<ChatTurn> messages;
  ChatParams params;
};

using SystemClock = std::function<std::chrono::system_clock::time_point()>;
using SteadyClock = std::function<std::chrono::steady_clock::time_point()>;

struct ServiceOptions {
  std::size_t stream_cap = 4;
  std::chrono::seconds health_ttl{30};
  std::size_t max_text_bytes = 100 * 1024;
  SystemClock wall_clock = [] { return std::chrono::system_clock::now(); };
  SteadyClock steady_clock = [] { return std::chrono::steady_clock::now(); };
};

/// The request handlers, free of any HTTP machinery. Every method is safe
/// to call concurrently.
class ApiService {
 public:
  ApiService(std::shared_ptr<const ProviderRegistry> registry, PipelineConfig pipeline,
             ServiceOptions options = {});

  ApiResponse analyze(std::string_view body) const;
  ApiResponse compare(std::string_view body) const;
  ApiResponse models() const;
  ApiResponse export_session(std::string_view body) const;
  ApiResponse health();

  /// Validates a chat body and resolves its model: 400 for malformed
  /// requests, 404 for unknown models.
  std::variant<ChatRequest, ApiResponse> parse_chat(std::string_view body) const;

  /// Reserves a stream slot for the provider; empty when the cap is reached.
  std::shared_ptr<void> acquire_stream(const std::string& provider_id);

  const std::shared_ptr<const ProviderRegistry>& registry() const noexcept { return registry_; }
  const PipelineConfig& pipeline() const noexcept { return pipeline_; }

 private:
  struct HealthCache {
    std::mutex mutex;
    std::optional<std::chrono::steady_clock::time_point> checked_at;
    bool detector = false;
    bool classifier = false;
  };

  std::shared_ptr<const ProviderRegistry> registry_;
  PipelineConfig pipeline_;
  ServiceOptions options_;
  std::map<std::string, std::shared_ptr<std::atomic<std::size_t>>, std::less<>> streams_;
  std::shared_ptr<HealthCache> health_;
};

/// Builds the handlers (backends, registry, limits) described by a config.
std::shared_ptr<ApiService> make_service(const ServerConfig& config, ServiceOptions options = {});

/// Error body used by every non-2xx JSON response.
std::string error_body(std::string_view message);

/// RFC 3339 UTC with second precision, e.g. "2025-01-31T12:00:00Z".
std::string format_rfc3339(std::chrono::system_clock::time_point t);

class Server {
 public:
  explicit Server(ServerConfig config);
  Server(ServerConfig config, std::shared_ptr<ApiService> service);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves on a background thread; returns the bound port (an
  /// OS-assigned one when the configured port is 0). Throws Error when the
  /// address cannot be bound.
  int start();
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

  int port() const noexcept { return port_; }
  ApiService& service() noexcept { return *service_; }

 private:
  struct Impl;
  ServerConfig config_;
  std::shared_ptr<ApiService> service_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace biasscope
