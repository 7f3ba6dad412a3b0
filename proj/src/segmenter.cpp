#include "biasscope/segmenter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace biasscope {

namespace detail {
extern const std::string_view kBuiltinAbbreviations;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool starts_with_at(std::string_view text, std::size_t pos, std::string_view what) {
  return text.substr(pos, what.size()) == what;
}

// Curly quotes in UTF-8.
constexpr std::string_view kRightDouble = "\xE2\x80\x9D";
constexpr std::string_view kRightSingle = "\xE2\x80\x99";
constexpr std::string_view kLeftDouble = "\xE2\x80\x9C";
constexpr std::string_view kLeftSingle = "\xE2\x80\x98";

// Length of the closing quote/bracket at pos, or 0.
std::size_t closing_at(std::string_view text, std::size_t pos) {
  const char c = text[pos];
  if (c == '"' || c == '\'' || c == ')' || c == ']' || c == '}') return 1;
  if (starts_with_at(text, pos, kRightDouble) || starts_with_at(text, pos, kRightSingle)) return 3;
  return 0;
}

std::size_t opening_at(std::string_view text, std::size_t pos) {
  const char c = text[pos];
  if (c == '"' || c == '\'' || c == '(' || c == '[' || c == '{' || c == '*' || c == '_') return 1;
  if (starts_with_at(text, pos, kLeftDouble) || starts_with_at(text, pos, kLeftSingle)) return 3;
  return 0;
}

bool starts_sentence(std::string_view text, std::size_t pos) {
  while (pos < text.size()) {
    const std::size_t n = opening_at(text, pos);
    if (n == 0) break;
    pos += n;
  }
  if (pos >= text.size()) return false;
  const auto c = static_cast<unsigned char>(text[pos]);
  return std::isupper(c) || std::isdigit(c);
}

// A markdown list item ("- ", "* ", "+ ", "1. ", "1) ") or heading ("# ")
// beginning at or after `pos` on the current line.
bool line_starts_block(std::string_view text, std::size_t pos) {
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  if (pos >= text.size()) return false;
  auto followed_by_space = [&](std::size_t p) { return p < text.size() && (text[p] == ' ' || text[p] == '\t'); };
  const char c = text[pos];
  if (c == '-' || c == '*' || c == '+') return followed_by_space(pos + 1);
  if (c == '#') {
    std::size_t p = pos;
    while (p < text.size() && text[p] == '#') ++p;
    return p - pos <= 6 && followed_by_space(p);
  }
  if (std::isdigit(static_cast<unsigned char>(c))) {
    std::size_t p = pos;
    while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) ++p;
    if (p - pos > 3 || p >= text.size()) return false;
    return (text[p] == '.' || text[p] == ')') && followed_by_space(p + 1);
  }
  return false;
}

bool line_is_heading(std::string_view text, std::size_t line_start) {
  std::size_t p = line_start;
  while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
  return p < text.size() && text[p] == '#' && line_starts_block(text, p);
}

// "12." opening a line is a list number, not a sentence end.
bool is_list_number_at(std::string_view text, std::size_t seg_start, std::size_t period) {
  std::size_t p = period;
  while (p > seg_start && std::isdigit(static_cast<unsigned char>(text[p - 1]))) --p;
  if (p == period) return false;
  while (p > seg_start && (text[p - 1] == ' ' || text[p - 1] == '\t')) --p;
  return p == seg_start || text[p - 1] == '\n';
}

}  // namespace

AbbreviationList AbbreviationList::builtin() { return parse(detail::kBuiltinAbbreviations); }

AbbreviationList AbbreviationList::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "cannot read abbreviation list " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

AbbreviationList AbbreviationList::parse(std::string_view contents) {
  AbbreviationList list;
  std::istringstream in{std::string(contents)};
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      view.remove_prefix(1);
      view = trim(view);
      constexpr std::string_view kVersion = "version:";
      if (view.substr(0, kVersion.size()) == kVersion)
        list.version_ = std::stoi(std::string(trim(view.substr(kVersion.size()))));
      continue;
    }
    list.tokens_.insert(to_lower(view));
  }
  return list;
}

bool AbbreviationList::contains(std::string_view token) const {
  return tokens_.find(to_lower(token)) != tokens_.end();
}

Segmenter::Segmenter() : Segmenter(AbbreviationList::builtin()) {}

Segmenter::Segmenter(AbbreviationList abbreviations, std::size_t max_sentence_bytes)
    : abbreviations_(std::move(abbreviations)),
      max_sentence_bytes_(std::max<std::size_t>(max_sentence_bytes, 1)) {}

bool Segmenter::is_abbreviation_at(std::string_view text, std::size_t seg_start,
                                   std::size_t period) const {
  std::size_t begin = period;
  while (begin > seg_start && !is_space(text[begin - 1])) --begin;
  while (begin < period && opening_at(text, begin) > 0) begin += opening_at(text, begin);
  return abbreviations_.contains(text.substr(begin, period + 1 - begin));
}

void Segmenter::emit(std::string_view text, std::size_t begin, std::size_t end,
                     std::vector<Sentence>& out) const {
  while (begin < end && is_space(text[begin])) ++begin;
  while (end > begin && is_space(text[end - 1])) --end;
  while (end - begin > max_sentence_bytes_) {
    std::size_t cut = 0;
    for (std::size_t p = begin + max_sentence_bytes_; p > begin; --p) {
      if (is_space(text[p])) {
        cut = p;
        break;
      }
    }
    if (cut == 0) {
      cut = begin + max_sentence_bytes_;
      while (cut > begin + 1 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    }
    std::size_t piece_end = cut;
    while (piece_end > begin && is_space(text[piece_end - 1])) --piece_end;
    out.push_back(Sentence::make(std::string(text.substr(begin, piece_end - begin)), begin, piece_end));
    begin = cut;
    while (begin < end && is_space(text[begin])) ++begin;
  }
  if (begin < end)
    out.push_back(Sentence::make(std::string(text.substr(begin, end - begin)), begin, end));
}

std::vector<Sentence> Segmenter::segment(std::string_view text) const {
  std::vector<Sentence> out;
  const std::size_t n = text.size();
  std::size_t seg_start = 0;
  std::size_t line_start = 0;
  std::size_t i = 0;
  while (i < n) {
    const char c = text[i];
    if (c == '\n') {
      const bool heading = line_is_heading(text, line_start);
      line_start = i + 1;
      std::size_t j = i + 1;
      while (j < n && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
      if (j < n && text[j] == '\n') {
        emit(text, seg_start, i, out);
        seg_start = j;
        line_start = j;
        i = j;
        continue;
      }
      if (heading || line_starts_block(text, i + 1)) {
        emit(text, seg_start, i, out);
        seg_start = i + 1;
      }
      ++i;
      continue;
    }
    if (is_terminator(c)) {
      std::size_t k = i;
      while (k < n && is_terminator(text[k])) ++k;
      const bool single_period = c == '.' && k == i + 1;
      while (k < n) {
        const std::size_t len = closing_at(text, k);
        if (len == 0) break;
        k += len;
      }
      bool split = false;
      if (k >= n) {
        split = true;
      } else if (is_space(text[k])) {
        std::size_t m = k;
        while (m < n && is_space(text[m])) ++m;
        split = (m >= n || starts_sentence(text, m)) &&
                !(single_period && (is_abbreviation_at(text, seg_start, i) ||
                                    is_list_number_at(text, seg_start, i)));
      }
      if (split) {
        emit(text, seg_start, k, out);
        seg_start = k;
      }
      i = k;
      continue;
    }
    ++i;
  }
  emit(text, seg_start, n, out);
  return out;
}

std::vector<Sentence> segment(std::string_view text) {
  static const Segmenter kDefault;
  return kDefault.segment(text);
}

}  // namespace biasscope
