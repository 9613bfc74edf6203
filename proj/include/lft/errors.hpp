#pragma once

#include <stdexcept>
#include <string>

namespace lft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LFT_DEFINE_ERROR(Name)                \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  };

LFT_DEFINE_ERROR(NotPositiveDefinite)
LFT_DEFINE_ERROR(SingularSystem)
LFT_DEFINE_ERROR(NonFiniteGradient)
LFT_DEFINE_ERROR(DimensionMismatch)
LFT_DEFINE_ERROR(NonMonotonicKnots)
LFT_DEFINE_ERROR(DuplicateKnot)
LFT_DEFINE_ERROR(NonFiniteState)
LFT_DEFINE_ERROR(StepSizeUnderflow)
LFT_DEFINE_ERROR(DegenerateElement)
LFT_DEFINE_ERROR(DomainError)
LFT_DEFINE_ERROR(NonFiniteLoss)
LFT_DEFINE_ERROR(GridTooSmall)
LFT_DEFINE_ERROR(ChannelMismatch)
LFT_DEFINE_ERROR(ZeroVariance)
LFT_DEFINE_ERROR(LengthMismatch)
LFT_DEFINE_ERROR(ConfigError)
LFT_DEFINE_ERROR(IoError)
LFT_DEFINE_ERROR(CheckpointMismatch)

#undef LFT_DEFINE_ERROR

}  // namespace lft
