#pragma once

#include <stdexcept>
#include <string>

namespace micromotion {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or domain invariant was violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The operating system refused a read or write.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A file was readable but its contents do not follow the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NonFiniteError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Text input with a problem on a specific line.
class ParseError : public FormatError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class OverflowError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace micromotion
