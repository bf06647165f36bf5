#pragma once

#include <stdexcept>
#include <string>

namespace pvckit {

// Base class for all library errors. CLI maps the concrete type to the
// machine-readable "type" field of its error JSON.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual const char* kind() const noexcept { return "error"; }
};

// Shape/extent mismatch; the message names the offending axis.
class ShapeError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape_error"; }
};

// Invalid configuration (e.g. input too small for the down-sampling path).
class ConfigError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

// API contract violation (e.g. backward of a non-scalar loss).
class ContractError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract_error"; }
};

// Empty or zero-mean template region where a nonempty one is required.
class DegenerateRegionError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_region"; }
};

// Image too small for the SSIM window on every plane orientation.
class WindowError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "window_error"; }
};

// File/serialization problems.
class IoError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

// Non-finite value detected while PVCKIT_CHECK_FINITE=1.
class NonFiniteError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_finite"; }
};

}  // namespace pvckit
