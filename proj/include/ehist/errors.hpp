#pragma once

#include <stdexcept>
#include <string>

namespace ehist {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Histories or bridging sets live on different time grids.
class GridError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument violates a documented precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Normalization of a zero-norm history or state was requested.
class DegenerateStateError : public Error {
 public:
  using Error::Error;
};

// The post-selection normalizer vanishes, so conditional probabilities are undefined.
class ImpossiblePostselectionError : public Error {
 public:
  using Error::Error;
};

// Bridging evolution that does not factor over the requested subsystem split.
class UnsupportedEvolutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace ehist
