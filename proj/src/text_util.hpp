#pragma once

// Internal helpers for configuration diagnostics.

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>

namespace biasscope::detail {

/// 1-based line containing byte `offset`.
inline std::size_t line_at_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Line of the first `"key"` occurrence, or 0 when absent.
inline std::size_t line_of_key(std::string_view text, std::string_view key) {
  const std::string quoted = "\"" + std::string(key) + "\"";
  const auto pos = text.find(quoted);
  return pos == std::string_view::npos ? 0 : line_at_offset(text, pos);
}

}  // namespace biasscope::detail
