#pragma once

#include <stdexcept>
#include <string>

namespace m3lak {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A distribution or model parameter outside its domain (including shape mismatches).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Cholesky failed even after the full jitter schedule, or a value went non-finite.
class NumericalDegeneracy : public Error {
 public:
  using Error::Error;
};

/// Stick breaking needed more components than the per-sweep cap allows.
class DegenerateSlice : public NumericalDegeneracy {
 public:
  using NumericalDegeneracy::NumericalDegeneracy;
};

class InternalInvariant : public Error {
 public:
  using Error::Error;
};

/// Input data problems: misaligned files, unparsable cells, bad labels, bad folds.
class InvalidData : public Error {
 public:
  using Error::Error;
};

}  // namespace m3lak
