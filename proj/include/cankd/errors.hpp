#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cankd {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct InvalidScale : Error {
  using Error::Error;
};

struct NotScalar : Error {
  using Error::Error;
};

struct GaussianChannelMismatch : Error {
  using Error::Error;
};

struct SpatialMismatch : Error {
  using Error::Error;
};

struct ConfigInvalid : Error {
  using Error::Error;
};

struct CheckpointMissing : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Malformed checkpoint payload; carries the byte offset where parsing failed.
struct FormatError : Error {
  FormatError(const std::string& msg, std::size_t at)
      : Error(msg + " (at byte " + std::to_string(at) + ")"), offset(at) {}
  std::size_t offset;
};

struct VersionMismatch : Error {
  using Error::Error;
};

// Non-finite value showed up where a finite loss was required.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace cankd
