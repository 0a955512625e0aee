#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ncps {

/// Coarse failure classes. The CLI maps these onto process exit codes.
enum class ErrorCategory {
  kConfig,      // invalid configuration or arguments
  kData,        // malformed or inconsistent input data
  kDomain,      // a value outside an operation's mathematical domain
  kDegenerate,  // geometry collapsed (zero-length vector, coincident points)
  kDivergence,  // optimization produced non-finite values
  kTrace,       // non-finite intermediate inside the autodiff tape
};

std::string_view to_string(ErrorCategory category);

/// Exit code used by the command-line tool for a given category.
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::kDomain, what) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error(ErrorCategory::kDegenerate, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorCategory::kDivergence, what) {}
};

/// Thrown by the reverse-mode tape; carries the name of the offending primitive.
class TraceError : public Error {
 public:
  TraceError(std::string primitive, const std::string& what)
      : Error(ErrorCategory::kTrace, what), primitive_(std::move(primitive)) {}

  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

/// Parse failure with the byte offset where decoding stopped.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace ncps
