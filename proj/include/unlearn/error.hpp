#pragma once

#include <stdexcept>
#include <string>

namespace unlearn {

// Runtime failure inside the pipeline (bad input, divergence, corrupt artifact).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or contradictory experiment configuration. Carries the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace unlearn
