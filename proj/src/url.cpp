#include "biasscope/url.hpp"

#include <regex>

#include "biasscope/errors.hpp"

namespace biasscope {

std::string ParsedUrl::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

ParsedUrl parse_url(std::string_view url) {
  static const std::regex kUrl(R"(^(https?)://([A-Za-z0-9._~-]+|\[[0-9A-Fa-f:.]+\])(?::([0-9]{1,5}))?(/[^\s]*)?$)",
                               std::regex::icase);
  std::cmatch m;
  if (!std::regex_match(url.data(), url.data() + url.size(), m, kUrl))
    throw ConfigError("url", 0, "invalid URL '" + std::string(url) + "'");
  ParsedUrl out;
  out.scheme = m[1].str();
  for (auto& c : out.scheme) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  out.host = m[2].str();
  if (m[3].matched) {
    out.port = std::stoi(m[3].str());
    if (out.port <= 0 || out.port > 65535)
      throw ConfigError("url", 0, "invalid port in URL '" + std::string(url) + "'");
  } else {
    out.port = out.scheme == "https" ? 443 : 80;
  }
  out.path = m[4].matched ? m[4].str() : "/";
  return out;
}

std::string join_path(std::string_view base, std::string_view suffix) {
  std::string out(base);
  while (!out.empty() && out.back() == '/') out.pop_back();
  while (!suffix.empty() && suffix.front() == '/') suffix.remove_prefix(1);
  out += '/';
  out += suffix;
  return out;
}

}  // namespace biasscope
