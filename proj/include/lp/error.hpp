#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(std::size_t position, std::string reason)
      : Error("parse error at " + std::to_string(position) + ": " + reason),
        position(position),
        reason(std::move(reason)) {}
  std::size_t position;
  std::string reason;
};

// A full-dialect construct appeared where only the toy dialect is allowed.
struct DialectError : Error {
  using Error::Error;
};

struct ExecError : Error {
  ExecError(std::size_t expr_index, std::string reason)
      : Error("expression " + std::to_string(expr_index) + ": " + reason),
        expr_index(expr_index),
        reason(std::move(reason)) {}
  std::size_t expr_index;
  std::string reason;
};

struct GenerationExhausted : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct FormatError : Error {
  FormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct UnknownToken : Error {
  explicit UnknownToken(const std::string& token)
      : Error("unknown token '" + token + "'"), token(token) {}
  std::string token;
};

struct ShapeError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  using Error::Error;
};

struct VersionError : Error {
  using Error::Error;
};

struct CorruptionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace lp
