#pragma once

#include <stdexcept>
#include <string>

namespace biasengine {

/// Base class for all engine errors. The category determines the CLI
/// exit code: config -> 2, data -> 3, provider -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: unknown axis names, malformed priority
/// vectors, missing files, inconsistent argument shapes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A distribution with zero total mass where positive mass is required.
class EmptyDistributionError : public DataError {
 public:
  using DataError::DataError;
};

/// A contingency table too degenerate to run a chi-square test on
/// (fewer than 2 rows or columns after dropping zero marginals).
class NotTestableError : public DataError {
 public:
  using DataError::DataError;
};

/// Failure of an external generation/annotation provider.
class ProviderError : public Error {
 public:
  using Error::Error;
};

/// Adapter did not respond within the configured deadline.
class AdapterTimeoutError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Adapter process exited nonzero or HTTP endpoint returned non-2xx.
class AdapterExecError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Adapter responded, but the payload violates the wire schema.
class AdapterSchemaError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// A numerical routine failed to converge within its iteration cap.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace biasengine
