#pragma once

#include <stdexcept>
#include <string>

namespace qkdlink {

/// Malformed input document (config, CSV, binary timestamps).
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A value is outside its allowed domain. The message names the key and the bound.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Beacon cross-correlation produced no significant lock.
class SyncError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Least-squares problem is singular or the data cannot be fitted.
class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace qkdlink
