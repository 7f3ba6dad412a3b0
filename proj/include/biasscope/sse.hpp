#pragma once

// Server-sent events framing (WHATWG event-stream format).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace biasscope {

struct SseEvent {
  std::string event;  // empty for the default "message" type
  std::string data;

  friend bool operator==(const SseEvent&, const SseEvent&) = default;
};

/// Incremental decoder: bytes may be split anywhere, including inside a
/// CRLF pair.
class SseParser {
 public:
  std::vector<SseEvent> feed(std::string_view bytes);
  /// Comment lines (": ...") seen so far; servers use them as heartbeats.
  std::size_t comment_count() const noexcept { return comments_; }

 private:
  void process_line(std::string_view line, std::vector<SseEvent>& out);

  std::string pending_;
  bool skip_lf_ = false;
  std::string event_;
  std::string data_;
  bool has_data_ = false;
  std::size_t comments_ = 0;
};

/// One `data:` event, splitting multi-line payloads into several data lines.
std::string sse_data_frame(std::string_view data);
std::string sse_comment_frame(std::string_view text);

}  // namespace biasscope
