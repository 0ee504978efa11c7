#pragma once

#include <stdexcept>
#include <string>

namespace lastomo {

// Base of every error the library throws. kind() is a stable, machine-readable
// tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

struct RangeError : Error {
  explicit RangeError(const std::string& what) : Error("range", what) {}
};

struct GeometryError : Error {
  explicit GeometryError(const std::string& what) : Error("geometry", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

}  // namespace lastomo
