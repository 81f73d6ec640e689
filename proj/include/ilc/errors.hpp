#pragma once

#include <stdexcept>
#include <string>

namespace ilc {

// Every failure raised by the library derives from Error so callers can
// catch the whole family at a module boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ILC_DEFINE_ERROR(Name)                              \
  class Name : public Error {                               \
   public:                                                  \
    explicit Name(const std::string& what) : Error(what) {} \
  }

// plant
ILC_DEFINE_ERROR(IntegrationFailure);
ILC_DEFINE_ERROR(InvalidRunSpec);

// embedding
ILC_DEFINE_ERROR(LagNotMultipleOfDt);
ILC_DEFINE_ERROR(SignalTooShort);
ILC_DEFINE_ERROR(DegenerateExtent);
ILC_DEFINE_ERROR(InvalidGrid);

// transport
ILC_DEFINE_ERROR(GridMismatch);
ILC_DEFINE_ERROR(MassMismatch);

// surrogate
ILC_DEFINE_ERROR(TooFewObservations);
ILC_DEFINE_ERROR(IllConditioned);
ILC_DEFINE_ERROR(OutOfBounds);

// signal
ILC_DEFINE_ERROR(SegmentTooLong);
ILC_DEFINE_ERROR(ZeroVariance);
ILC_DEFINE_ERROR(TooShort);

// controller / experiment configuration
ILC_DEFINE_ERROR(ConfigError);

#undef ILC_DEFINE_ERROR

}  // namespace ilc
