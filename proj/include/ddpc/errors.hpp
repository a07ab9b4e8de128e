#pragma once

#include <stdexcept>
#include <string>

namespace ddpc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct RankDeficient : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

struct OrderExceedsHorizon : Error {
  using Error::Error;
};

struct NoConvergence : Error {
  using Error::Error;
};

struct EmptyTaskSet : Error {
  using Error::Error;
};

struct ZeroTrace : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct RunInvalid : Error {
  using Error::Error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionMismatch(what);
}

}  // namespace ddpc
