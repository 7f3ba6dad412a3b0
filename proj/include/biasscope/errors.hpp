#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace biasscope {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a domain-type invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// An aggregate operation received no input where at least one item is required.
class EmptyInput : public Error {
 public:
  using Error::Error;
};

/// No classifier entry carried a label with known polarity.
class AllLabelsUnknown : public Error {
 public:
  using Error::Error;
};

/// A classifier or provider payload could not be decoded.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Requested provider/model pair is not present in the registry.
class UnknownModel : public Error {
 public:
  using Error::Error;
};

/// Configuration file or value rejected. `key` names the offending entry and
/// `line` is 1-based, or 0 when not applicable.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, std::size_t line, const std::string& what)
      : Error(what), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

}  // namespace biasscope
