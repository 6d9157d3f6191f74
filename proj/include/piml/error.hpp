#pragma once

#include <stdexcept>
#include <string>

namespace piml {

// Base for every error raised by the toolkit. The CLI maps IoError/ParseError
// to exit code 1 and ValidationError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class MalformedLine : public ParseError {
 public:
  MalformedLine(std::size_t line_no, const std::string& what)
      : ParseError("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class NonContiguousCycles : public ParseError {
 public:
  NonContiguousCycles(int unit_id, std::size_t line_no)
      : ParseError("line " + std::to_string(line_no) + ": cycles of unit " + std::to_string(unit_id) +
                   " are not consecutive from 1"),
        unit_id_(unit_id) {}
  int unit_id() const noexcept { return unit_id_; }

 private:
  int unit_id_;
};

class MissingRulFile : public IoError {
 public:
  explicit MissingRulFile(const std::string& what) : IoError("missing RUL targets: " + what) {}
};

class TooFewPaths : public InvalidArgument {
 public:
  explicit TooFewPaths(std::size_t n)
      : InvalidArgument("path ensemble needs at least 2 trajectories, got " + std::to_string(n)) {}
};

class OutOfRange : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class LengthExceedsSupport : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ShapeMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class EmptyBatch : public InvalidArgument {
 public:
  EmptyBatch() : InvalidArgument("empty batch") {}
};

class MissingPhysics : public InvalidArgument {
 public:
  explicit MissingPhysics(int sensor_id)
      : InvalidArgument("no physics estimate for sensor " + std::to_string(sensor_id)), sensor_id_(sensor_id) {}
  int sensor_id() const noexcept { return sensor_id_; }

 private:
  int sensor_id_;
};

}  // namespace piml
