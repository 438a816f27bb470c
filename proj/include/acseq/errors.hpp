#pragma once

#include <stdexcept>
#include <string>

namespace acseq {

/// Caller passed a value outside an operation's domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked on an object that is not ready for it
/// (backward without forward, episode without reward, missing stage input).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A parameter, gradient or advantage became non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::string what, std::string where)
      : std::runtime_error(std::move(what)), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Broken internal contract, e.g. the actor received gradient while frozen.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace acseq
