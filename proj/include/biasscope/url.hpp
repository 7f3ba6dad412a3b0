#pragma once

#include <string>
#include <string_view>

namespace biasscope {

struct ParsedUrl {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // always begins with '/'

  /// "scheme://host:port", the form HTTP clients are constructed from.
  std::string origin() const;
};

/// Throws ConfigError (key "url") for anything that is not an absolute
/// http(s) URL.
ParsedUrl parse_url(std::string_view url);

/// Joins a base path and a suffix with exactly one '/'.
std::string join_path(std::string_view base, std::string_view suffix);

}  // namespace biasscope
