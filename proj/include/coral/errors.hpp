#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coral {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TooFewPoints : public Error {
 public:
  using Error::Error;
};

class DegenerateSample : public Error {
 public:
  using Error::Error;
};

class NonInvertible : public Error {
 public:
  using Error::Error;
};

class InvalidDepth : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NoModelsProposed : public Error {
 public:
  using Error::Error;
};

class InsufficientLocalPoints : public Error {
 public:
  using Error::Error;
};

class DegenerateRays : public Error {
 public:
  using Error::Error;
};

class AllDepthInvalid : public Error {
 public:
  using Error::Error;
};

class NoLabels : public Error {
 public:
  using Error::Error;
};

class MissingHeader : public Error {
 public:
  using Error::Error;
};

/// A file that cannot be opened, read or written.
class FileError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace coral
