#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cxnprobe {

// Base for every data-level failure raised by the library. The CLI maps
// these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class FormatError : public Error {
 public:
  FormatError(std::string origin, std::size_t line, const std::string& message);

  const std::string& origin() const { return origin_; }
  std::size_t line() const { return line_; }

 private:
  std::string origin_;
  std::size_t line_;
};

// Failure talking to an embedding provider (network, HTTP status, payload shape).
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace cxnprobe
