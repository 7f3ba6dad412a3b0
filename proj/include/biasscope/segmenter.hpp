#pragma once

// Deterministic rule-based sentence segmentation.
//
// A sentence ends after a run of '.', '!' or '?' (plus any closing quotes or
// brackets) when the text ends there or whitespace follows and the next word
// starts with an uppercase ASCII letter or a digit, optionally behind opening
// quotes, brackets or markdown emphasis. A single '.' that closes a listed
// abbreviation never ends a sentence. Blank lines and markdown list items or
// headings at the start of a line always start a new sentence. Sentences
// longer than the length limit are split at the last whitespace before it.

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "biasscope/core_model.hpp"

namespace biasscope {

class AbbreviationList {
 public:
  /// The list shipped in data/abbreviations.txt, compiled in.
  static AbbreviationList builtin();
  /// One token per line, '#' starts a comment, a "# version: N" comment pins
  /// the list version. Throws ConfigError when the file cannot be read.
  static AbbreviationList from_file(const std::filesystem::path& path);
  static AbbreviationList parse(std::string_view contents);

  /// `token` is compared case-insensitively and must include the final '.'.
  bool contains(std::string_view token) const;
  int version() const noexcept { return version_; }
  std::size_t size() const noexcept { return tokens_.size(); }

 private:
  std::set<std::string, std::less<>> tokens_;
  int version_ = 0;
};

inline constexpr std::size_t kMaxSentenceBytes = 1000;

class Segmenter {
 public:
  Segmenter();
  explicit Segmenter(AbbreviationList abbreviations,
                     std::size_t max_sentence_bytes = kMaxSentenceBytes);

  /// Total: the empty string yields no sentences.
  std::vector<Sentence> segment(std::string_view text) const;

  const AbbreviationList& abbreviations() const noexcept { return abbreviations_; }

 private:
  bool is_abbreviation_at(std::string_view text, std::size_t seg_start,
                          std::size_t period) const;
  void emit(std::string_view text, std::size_t begin, std::size_t end,
            std::vector<Sentence>& out) const;

  AbbreviationList abbreviations_;
  std::size_t max_sentence_bytes_;
};

/// Segments with the builtin abbreviation list.
std::vector<Sentence> segment(std::string_view text);

}  // namespace biasscope
