#pragma once

#include <stdexcept>
#include <string>

namespace ghostsim {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct RankDeficient : Error {
  explicit RankDeficient(const std::string& msg) : Error(msg) {}
};

struct DegenerateProjection : Error {
  explicit DegenerateProjection(const std::string& msg) : Error(msg) {}
};

struct InvalidRatio : Error {
  explicit InvalidRatio(const std::string& msg) : Error(msg) {}
};

struct NonPositiveDistance : Error {
  explicit NonPositiveDistance(const std::string& msg) : Error(msg) {}
};

struct OutOfTable : Error {
  explicit OutOfTable(const std::string& msg) : Error(msg) {}
};

struct DegeneratePairs : Error {
  explicit DegeneratePairs(const std::string& msg) : Error(msg) {}
};

struct NonPositiveAmbient : Error {
  explicit NonPositiveAmbient(const std::string& msg) : Error(msg) {}
};

struct PlacementOutOfBounds : Error {
  explicit PlacementOutOfBounds(const std::string& msg) : Error(msg) {}
};

struct InsufficientVariation : Error {
  explicit InsufficientVariation(const std::string& msg) : Error(msg) {}
};

struct NonConvergence : Error {
  explicit NonConvergence(const std::string& msg) : Error(msg) {}
};

struct AllZeroIlluminance : Error {
  explicit AllZeroIlluminance(const std::string& msg) : Error(msg) {}
};

struct DimMismatch : Error {
  explicit DimMismatch(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct EmptySamples : Error {
  explicit EmptySamples(const std::string& msg) : Error(msg) {}
};

struct InvalidShape : Error {
  explicit InvalidShape(const std::string& msg) : Error(msg) {}
};

struct NonFiniteObjective : Error {
  explicit NonFiniteObjective(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace ghostsim
