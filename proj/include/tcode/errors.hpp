#pragma once

#include <stdexcept>
#include <string>

namespace tcode {

// Error taxonomy. The CLI maps these onto process exit codes.

/// Tensor shapes that do not line up.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or unsatisfiable configuration (unknown keys, bad group tables, ...).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// NaN/Inf encountered during optimization.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Requested samples are unavailable (e.g. an empty experience buffer).
class SamplingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File-system or format failures (missing files, checksum mismatch).
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace tcode
