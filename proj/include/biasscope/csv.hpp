#pragma once

// Minimal RFC 4180 reader: quoted fields may hold delimiters, doubled quotes
// and line breaks. CRLF and LF line endings are both accepted.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace biasscope {

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the row starts
};

class CsvReader {
 public:
  CsvReader(std::string_view text, char delimiter) : text_(text), delimiter_(delimiter) {}

  /// Next non-blank row. Throws DatasetError(MalformedRow) on an
  /// unterminated quoted field.
  std::optional<CsvRow> next();

 private:
  std::string_view text_;
  char delimiter_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

/// The most frequent of ',', '\t' and ';' in the first line (',' on ties).
char sniff_delimiter(std::string_view text);

}  // namespace biasscope
