#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gllim {

/// Problem dimensions shared by every module.
///
/// D is the observation (spectral) dimension, L_t the observed response
/// dimension, L_w the latent response dimension; the full response lives in
/// L = L_t + L_w dimensions. K mixture components, N sites (samples/pixels).
struct Dims {
  int D = 1;
  int L_t = 0;
  int L_w = 0;
  int K = 1;
  std::int64_t N = 1;

  int L() const { return L_t + L_w; }

  /// Throws ConfigError on nonsensical values; warns once when L > D
  /// (the model is designed for L much smaller than D).
  void validate() const;
};

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: ConfigError -> 2,
// NumericError -> 3, IoError -> 4.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  using Error::Error;
};

struct DimensionMismatch : ConfigError {
  using ConfigError::ConfigError;
};

/// Site label outside [0, K).
struct InvalidLabel : ConfigError {
  using ConfigError::ConfigError;
};

/// Region layout that cannot be tiled onto the requested image.
struct RegionTooSmall : ConfigError {
  using ConfigError::ConfigError;
};

/// Fewer dataset rows than the requested nearest-neighbor pool.
struct InsufficientNeighbors : ConfigError {
  using ConfigError::ConfigError;
};

struct NumericError : Error {
  using Error::Error;
};

/// Covariance not positive definite even after the one-shot jitter retry.
/// `component` is the mixture component index when known, else -1.
struct DegenerateCovariance : NumericError {
  int component = -1;
  explicit DegenerateCovariance(const std::string& msg, int component_index = -1)
      : NumericError(msg), component(component_index) {}
};

struct NonFinite : NumericError {
  using NumericError::NumericError;
};

/// Column with zero variance where unit-variance scaling was requested.
struct ConstantColumn : NumericError {
  using NumericError::NumericError;
};

/// Ground-truth vector with zero centered energy (NRMSE undefined).
struct ConstantTruth : NumericError {
  using NumericError::NumericError;
};

/// Paired differences with zero variance (t statistic undefined).
struct ZeroVariance : NumericError {
  using NumericError::NumericError;
};

struct IoError : Error {
  using Error::Error;
};

/// Malformed input file; carries the 1-based row/column of the offending cell
/// when known (0 = unknown).
struct ParseError : IoError {
  std::int64_t row = 0;
  std::int64_t column = 0;
  ParseError(const std::string& msg, std::int64_t r = 0, std::int64_t c = 0)
      : IoError(msg), row(r), column(c) {}
};

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

namespace logging {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

Level& level();
Level parse_level(const std::string& name);
void message(Level lvl, const std::string& msg);

inline void debug(const std::string& msg) { message(Level::debug, msg); }
inline void info(const std::string& msg) { message(Level::info, msg); }
inline void warn(const std::string& msg) { message(Level::warn, msg); }

}  // namespace logging

}  // namespace gllim
