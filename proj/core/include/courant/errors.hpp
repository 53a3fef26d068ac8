#pragma once

#include <stdexcept>
#include <string>

namespace courant {

// Precondition / validation failures (bad arguments, invalid configs).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Tensor dimension mismatches.
class ShapeError : public ContractError {
 public:
  explicit ShapeError(const std::string& what) : ContractError(what) {}
};

// Hard size caps (e.g. dense Jacobian dimension).
class SizeError : public ContractError {
 public:
  explicit SizeError(const std::string& what) : ContractError(what) {}
};

// NaN/Inf or diverging computations.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed files (snapshots, checkpoints, configs on disk).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace courant
