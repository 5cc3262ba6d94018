#pragma once

#include <stdexcept>
#include <string>

namespace mtpp {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape mismatch in a graph op.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

// Malformed event data (ordering, range, mark ids, parse failures).
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("data: " + msg) {}
};

// Bad or unknown configuration key/value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Non-finite loss or gradient; message names the offending block when known.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

// Root finding could not bracket its target.
class BracketError : public Error {
 public:
  explicit BracketError(const std::string& msg) : Error("bracket: " + msg) {}
};

// Simulator configuration defines a non-stationary process.
class StationarityError : public Error {
 public:
  explicit StationarityError(const std::string& msg)
      : Error("stationarity: " + msg) {}
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

}  // namespace mtpp
