#pragma once

#include <stdexcept>
#include <string>

namespace brwfade {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define BRWFADE_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    explicit Name(const std::string& what)  \
        : Error(#Name ": " + what) {}       \
  }

BRWFADE_DEFINE_ERROR(InvalidArgument);
BRWFADE_DEFINE_ERROR(ParameterOutOfRange);
BRWFADE_DEFINE_ERROR(UnboundedPositiveMean);
BRWFADE_DEFINE_ERROR(NotLongTailed);
BRWFADE_DEFINE_ERROR(DivergentQSeries);
BRWFADE_DEFINE_ERROR(NonFadingEnvironment);
BRWFADE_DEFINE_ERROR(Inconclusive);
BRWFADE_DEFINE_ERROR(NotRealizedWithinCap);
BRWFADE_DEFINE_ERROR(NonSummable);
BRWFADE_DEFINE_ERROR(CalibrationFailed);
BRWFADE_DEFINE_ERROR(HypothesisViolation);
BRWFADE_DEFINE_ERROR(ConfigError);

#undef BRWFADE_DEFINE_ERROR

}  // namespace brwfade
