#pragma once

// Streaming chat completions over OpenAI-compatible providers, plus a
// scripted mock provider for offline runs.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "biasscope/core_model.hpp"

namespace biasscope {

struct TokenDelta {
  std::string text;
  friend bool operator==(const TokenDelta&, const TokenDelta&) = default;
};

struct TokenDone {
  std::string finish_reason;
  std::string full_text;
  friend bool operator==(const TokenDone&, const TokenDone&) = default;
};

struct TokenStreamError {
  std::string message;
  friend bool operator==(const TokenStreamError&, const TokenStreamError&) = default;
};

/// A stream is zero or more deltas followed by exactly one Done or
/// StreamError; Done.full_text is the concatenation of the deltas.
using TokenEvent = std::variant<TokenDelta, TokenDone, TokenStreamError>;

inline bool is_terminal(const TokenEvent& e) { return !std::holds_alternative<TokenDelta>(e); }

struct ChatParams {
  double temperature = 0.7;
  int max_tokens = 1024;

  /// Throws InvariantError for temperature outside [0, 2] or max_tokens < 1.
  void validate() const;
};

struct MockProviderConfig {
  /// Code points per delta. With `chunk_seed` set, each delta length is drawn
  /// uniformly from [1, chunk_size] by a generator seeded with it.
  std::size_t chunk_size = 4;
  std::optional<std::uint32_t> chunk_seed;
  /// Emit this many deltas, then a StreamError instead of Done.
  std::optional<std::size_t> fail_after_chunks;
  std::chrono::milliseconds chunk_delay{0};
  /// Exact last-user-message → response. Unscripted prompts are echoed.
  std::map<std::string, std::string> script;
  std::string finish_reason = "stop";
};

struct ModelEntry {
  std::string model_id;
  std::string display_name;
};

struct ProviderConfig {
  std::string provider_id;
  std::string base_url;  // unused by mock providers
  std::string api_key;
  std::vector<ModelEntry> models;
  std::map<std::string, std::string> extra_headers;
  std::optional<MockProviderConfig> mock;

  bool allows(std::string_view model_id) const;
};

/// Per-provider counters, used by tests to observe upstream behaviour.
struct ProviderStats {
  std::atomic<std::size_t> started{0};
  std::atomic<std::size_t> completed{0};
  std::atomic<std::size_t> failed{0};
  std::atomic<std::size_t> cancelled{0};
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Looks variables up in the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Replaces `${NAME}` with the variable's value (empty when unset).
std::string interpolate_env(std::string_view text, const EnvLookup& env = process_env);

/// Read-only after loading; safe to share between threads.
class ProviderRegistry {
 public:
  ProviderRegistry() = default;
  ProviderRegistry(const ProviderRegistry&) = delete;
  ProviderRegistry& operator=(const ProviderRegistry&) = delete;
  ProviderRegistry(ProviderRegistry&&) = default;
  ProviderRegistry& operator=(ProviderRegistry&&) = default;

  /// `{"providers": [...]}`; see README for the schema. Relative
  /// `script_file` paths resolve against `base_dir`. Throws ConfigError with
  /// the offending key.
  static ProviderRegistry from_json(const Json& doc, const EnvLookup& env = process_env,
                                    const std::filesystem::path& base_dir = {});
  /// As from_json; parse errors carry the line number.
  static ProviderRegistry from_file(const std::filesystem::path& path,
                                    const EnvLookup& env = process_env);
  /// A registry holding only the mock provider with model "echo".
  static ProviderRegistry builtin_mock();

  /// Throws ConfigError for duplicate ids, missing models or bad URLs.
  void add(ProviderConfig config);

  const ProviderConfig* find(std::string_view provider_id) const;
  /// Throws UnknownModel unless the provider exists and allows the model.
  const ProviderConfig& resolve(const ProviderModel& model) const;
  /// Provider order, then allowlist order.
  std::vector<ProviderModel> list_models() const;
  ProviderStats& stats(std::string_view provider_id) const;

  /// Removes every configured API key from `text`.
  std::string scrub(std::string text) const;

  bool empty() const noexcept { return providers_.empty(); }

 private:
  std::vector<ProviderConfig> providers_;
  std::map<std::string, std::unique_ptr<ProviderStats>, std::less<>> stats_;
};

std::vector<ProviderModel> list_models(const ProviderRegistry& registry);

/// Receives events in order; return false to cancel the stream.
using TokenSink = std::function<bool(const TokenEvent&)>;

/// Cancels an in-flight stream from another thread, aborting the upstream
/// request.
class CancelToken {
 public:
  void cancel();
  bool cancelled() const noexcept { return cancelled_.load(); }
  /// Runs `fn` on cancel (immediately if already cancelled). Pass an empty
  /// function to detach.
  void on_cancel(std::function<void()> fn);

 private:
  std::atomic<bool> cancelled_{false};
  std::mutex mutex_;
  std::function<void()> hook_;
};

/// Runs one chat completion and delivers its events to `sink` on the calling
/// thread. Throws UnknownModel before any event; everything after that is
/// reported as events, with API keys scrubbed from error messages.
void stream_chat(const ProviderRegistry& registry, const ProviderModel& model,
                 const std::vector<ChatTurn>& history, const ChatParams& params,
                 const TokenSink& sink, CancelToken* cancel = nullptr);

/// Pull-style stream: the provider runs on its own thread and pauses once
/// `buffer` events are waiting. Destroying the stream cancels it.
class TokenStream {
 public:
  static constexpr std::size_t kDefaultBuffer = 256;

  /// Throws UnknownModel (or InvariantError for bad params) before starting.
  TokenStream(std::shared_ptr<const ProviderRegistry> registry, ProviderModel model,
              std::vector<ChatTurn> history, ChatParams params,
              std::size_t buffer = kDefaultBuffer);
  ~TokenStream();
  TokenStream(const TokenStream&) = delete;
  TokenStream& operator=(const TokenStream&) = delete;

  /// Next event, or nullopt if none arrived within `timeout` or the stream
  /// has ended.
  std::optional<TokenEvent> next(std::chrono::milliseconds timeout);
  /// True once the terminal event has been taken.
  bool finished() const;
  void cancel();

 private:
  struct State {
    std::mutex mutex;
    std::condition_variable readable;
    std::condition_variable writable;
    std::deque<TokenEvent> queue;
    std::size_t capacity = kDefaultBuffer;
    bool cancelled = false;
    bool producer_done = false;
    bool terminal_taken = false;
    CancelToken token;
  };

  std::shared_ptr<State> state_;
  std::jthread producer_;
};

}  // namespace biasscope
