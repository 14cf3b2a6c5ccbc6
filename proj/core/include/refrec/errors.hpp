#pragma once

#include <stdexcept>
#include <string>

namespace refrec {

/// Thrown when a caller violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an on-disk file or a client payload does not follow its schema.
/// `field()` names the offending field when one is known.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& message, std::string field = {})
      : std::runtime_error(message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace refrec
