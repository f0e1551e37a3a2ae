#pragma once

#include <stdexcept>
#include <string>

namespace simcse {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// numerics
class DimMismatchError : public Error { public: using Error::Error; };
class ZeroNormError : public Error { public: using Error::Error; };
class DegenerateSeriesError : public Error { public: using Error::Error; };
class NoConvergenceError : public Error { public: using Error::Error; };

// losses
class NonFiniteLossError : public Error { public: using Error::Error; };
class MissingHardNegativesError : public Error { public: using Error::Error; };
class NotNormalizedError : public Error { public: using Error::Error; };
class NeedTwoPointsError : public Error { public: using Error::Error; };

// encoder
class InvalidPlanError : public Error { public: using Error::Error; };
class LengthOverflowError : public Error { public: using Error::Error; };
class PlanMismatchError : public Error { public: using Error::Error; };

// augment
class TooShortError : public Error { public: using Error::Error; };
class NoReplaceableTokenError : public Error { public: using Error::Error; };

// data
class EmptyCorpusError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class BadColumnCountError : public Error { public: using Error::Error; };
class ScoreOutOfRangeError : public Error { public: using Error::Error; };
class VocabTooSmallError : public Error { public: using Error::Error; };

// train
class ObjectiveDataMismatchError : public Error { public: using Error::Error; };

// metrics / evalproto
class EmptySelectionError : public Error { public: using Error::Error; };

}  // namespace simcse
