#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vidcurate {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented type invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition (bad argument, bad size).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Input file is malformed or truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Malformed manifest line; carries the 1-based line number.
class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A remote provider (embedding, OCR, captioner) failed.
class ProviderError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or profile file; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vidcurate
