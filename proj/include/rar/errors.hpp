#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "rar/types.hpp"

namespace rar {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  explicit RangeError(std::string field)
      : Error("value out of range: " + field), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyText : public Error {
 public:
  EmptyText() : Error("text is empty after trimming") {}
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)) {}
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class UnknownId : public Error {
 public:
  explicit UnknownId(const std::string& id) : Error("unknown id: " + id) {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class JudgeParseError : public Error {
 public:
  explicit JudgeParseError(const std::string& reply)
      : Error("judge reply is neither 'similar' nor 'different': " + reply) {}
};

class ChoiceExtractionError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class DegenerateTable : public Error {
 public:
  DegenerateTable() : Error("contingency table has a zero marginal") {}
};

// A backend could not be reached or answered with garbage. Carries the tier
// so callers can tell a weak-host outage from a strong-host one.
class TransportError : public Error {
 public:
  TransportError(ModelTier tier, const std::string& what)
      : Error(std::string(to_string(tier)) + " backend: " + what), tier_(tier) {}
  ModelTier tier() const noexcept { return tier_; }

 private:
  ModelTier tier_;
};

}  // namespace rar
