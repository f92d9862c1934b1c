#pragma once

#include <stdexcept>
#include <string>

namespace ddbh {

/// Invalid user input: bad parameters, malformed configuration, inconsistent
/// lattice/model pairs. Maps to CLI exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation ran but could not produce a trustworthy answer (divergence,
/// non-convergence, fit failure, cutoff exhaustion). Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddbh
