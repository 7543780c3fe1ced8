#pragma once

#include <stdexcept>
#include <string>

namespace cmma {

// Base class for every error this library raises on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible tensor/parameter shapes. The message names the offending shapes.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Invalid argument values (negative sigma, empty sample set, bad bit vector...).
struct ValueError : Error {
  explicit ValueError(const std::string& what) : Error(what) {}
};

// File could not be read/written or is structurally broken (bad magic, truncation).
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(what) {}
};

// Persisted file declares an unsupported format version.
struct VersionError : Error {
  explicit VersionError(const std::string& what) : Error(what) {}
};

}  // namespace cmma
