#include "biasscope/csv.hpp"

#include <algorithm>

#include "biasscope/eval.hpp"

namespace biasscope {

std::optional<CsvRow> CsvReader::next() {
  while (pos_ < text_.size()) {
    CsvRow row;
    row.line = line_;
    std::string field;
    bool in_quotes = false;
    bool row_done = false;
    const std::size_t quote_line = line_;
    while (pos_ < text_.size() && !row_done) {
      const char c = text_[pos_++];
      if (in_quotes) {
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == '"' && field.empty()) {
        in_quotes = true;
      } else if (c == delimiter_) {
        row.fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\r' && pos_ < text_.size() && text_[pos_] == '\n') {
        // handled with the '\n'
      } else if (c == '\n') {
        ++line_;
        row_done = true;
      } else {
        field.push_back(c);
      }
    }
    if (in_quotes)
      throw DatasetError(DatasetError::Kind::MalformedRow, quote_line,
                         "unterminated quoted field starting on line " + std::to_string(quote_line));
    row.fields.push_back(std::move(field));
    const bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) return row;
  }
  return std::nullopt;
}

char sniff_delimiter(std::string_view text) {
  const std::string_view first = text.substr(0, text.find('\n'));
  const auto commas = std::count(first.begin(), first.end(), ',');
  const auto tabs = std::count(first.begin(), first.end(), '\t');
  const auto semis = std::count(first.begin(), first.end(), ';');
  if (tabs > commas && tabs >= semis) return '\t';
  if (semis > commas && semis > tabs) return ';';
  return ',';
}

}  // namespace biasscope
