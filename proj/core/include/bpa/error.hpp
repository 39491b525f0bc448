#pragma once

#include <stdexcept>
#include <string>

namespace bpa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration; `field` is the dotted path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// A pipeline stage was invoked before the stage it depends on produced output.
class MissingDependency : public Error {
 public:
  explicit MissingDependency(std::string stage) : Error("missing: " + stage), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Bad or insufficient input data (empty pools, wrong sizes, undecodable images).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace bpa
