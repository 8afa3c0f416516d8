#pragma once

#include <stdexcept>
#include <string>

namespace robust_filter {

/// Mismatched vector/matrix sizes between related inputs.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A parameter outside its admissible domain (e.g. a non-positive weight).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline void require_param(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

}  // namespace detail
}  // namespace robust_filter
