#pragma once

#include <stdexcept>
#include <string>

namespace agb {

// Base of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or infeasible parameter combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable dataset/checkpoint files, I/O failures.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses and other numerical breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace agb
