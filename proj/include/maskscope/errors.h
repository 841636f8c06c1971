#pragma once

#include <stdexcept>
#include <string>

namespace maskscope {

// User-facing validation failure. The CLI maps this family to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

// File-format violations (containers, PNGs).
class FormatError : public ValidationError {
 public:
  explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

class BadMagicError : public FormatError {
 public:
  explicit BadMagicError(const std::string& msg) : FormatError(msg) {}
};

class TruncatedPayloadError : public FormatError {
 public:
  explicit TruncatedPayloadError(const std::string& msg) : FormatError(msg) {}
};

class DtypeMismatchError : public FormatError {
 public:
  explicit DtypeMismatchError(const std::string& msg) : FormatError(msg) {}
};

}  // namespace maskscope
