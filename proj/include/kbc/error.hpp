#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kbc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file content.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Unknown name under a frozen vocabulary, or a bad id.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable dataset files.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, unknown config keys, inconsistent dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint and dataset (or scorer) do not fit together.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace kbc
