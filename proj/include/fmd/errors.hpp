#pragma once

#include <stdexcept>
#include <string>

namespace fmd {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NoGuidedModes : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InsufficientModes : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ResolutionTooCoarse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateLabel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConstantImage : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptyFrame : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct OddDimension : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TooManyModes : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fmd
