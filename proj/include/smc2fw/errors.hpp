#pragma once

#include <stdexcept>
#include <string>

namespace smc2fw {

// A parameter outside its admissible domain (non-positive precision, etc).
class ParameterDomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every weight of a cloud is zero: the model cannot explain the data.
class DegenerateWeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unusable input file.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smc2fw
