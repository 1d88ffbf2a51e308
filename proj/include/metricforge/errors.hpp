#pragma once

#include <stdexcept>
#include <string>

namespace metricforge {

// Base type for every error thrown by the library. Callers that do not care
// about the specific failure can catch this alone.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroVectorError : public Error { public: using Error::Error; };
class DimensionMismatchError : public Error { public: using Error::Error; };
class ShapeMismatchError : public Error { public: using Error::Error; };
class AllMaskedError : public Error { public: using Error::Error; };
class EmptyInputError : public Error { public: using Error::Error; };
class NotNormalizedError : public Error { public: using Error::Error; };
class BadBatchStructureError : public Error { public: using Error::Error; };
class NoPositiveError : public Error { public: using Error::Error; };
class NoNegativeError : public Error { public: using Error::Error; };
class MissingProxyError : public Error { public: using Error::Error; };
class NonPositiveTemperatureError : public Error { public: using Error::Error; };
class KOutOfRangeError : public Error { public: using Error::Error; };
class DegenerateDirectionError : public Error { public: using Error::Error; };
class DegenerateRowError : public Error { public: using Error::Error; };
class InsufficientClassesError : public Error { public: using Error::Error; };
class SingletonClassError : public Error { public: using Error::Error; };
class KTooLargeError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

// Raised when a loss or training step produces NaN/Inf. Carries the global
// step index when thrown from the training loop (-1 otherwise).
class NonFiniteLossError : public Error {
 public:
  explicit NonFiniteLossError(const std::string& what, long step = -1)
      : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace metricforge
