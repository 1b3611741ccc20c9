#pragma once

#include <stdexcept>

namespace dfn {

// Error taxonomy. Everything the library throws derives from Error so
// callers (the CLI in particular) can map failures to exit codes without
// enumerating subtypes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or image extents do not line up for the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// Caller-supplied data is invalid (bad label, empty batch, out-of-range pixel
// coordinates, malformed manifest row).
struct InputError : Error {
  using Error::Error;
};

// A configuration struct fails validation before any work starts.
struct ConfigError : Error {
  using Error::Error;
};

// An object is used in an order its lifecycle forbids (step() before
// gradients exist, lookup of an unknown parameter name).
struct StateError : Error {
  using Error::Error;
};

// Filesystem and decode failures: unreadable paths, truncated or corrupt
// images, cache blobs, checkpoints.
struct IoError : Error {
  using Error::Error;
};

}  // namespace dfn
