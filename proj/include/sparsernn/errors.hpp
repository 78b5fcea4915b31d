#ifndef SPARSERNN_ERRORS_HPP
#define SPARSERNN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sparsernn {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Input outside an op's mathematical domain (log of a non-positive value, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// API misuse: wrong call order, forbidden mode combination.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// NaN/Inf produced or detected.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sparsernn

#endif  // SPARSERNN_ERRORS_HPP
