#pragma once

#include <stdexcept>
#include <string>

namespace fracsynth {

//! Raised when an input violates an operation's preconditions.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

//! Raised when a stochastic generator cannot reach its target.
class GenerationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ValidationError(what);
}

}  // namespace fracsynth
