#pragma once

#include <stdexcept>
#include <string>

namespace chcds {

//! Invalid user-supplied configuration (unknown names, out-of-range levels, bad sizes).
class ConfigError : public std::invalid_argument
{
public:
  explicit ConfigError(const std::string& what)
    : std::invalid_argument(what)
  {}
};

//! Malformed or degenerate data (parse failures, empty or constant samples).
class DataError : public std::runtime_error
{
public:
  explicit DataError(const std::string& what)
    : std::runtime_error(what)
  {}
};

//! Numerical failure inside an estimator or root finder.
class NumericalError : public std::runtime_error
{
public:
  explicit NumericalError(const std::string& what)
    : std::runtime_error(what)
  {}
};

} // namespace chcds
