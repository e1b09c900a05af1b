#pragma once

#include <stdexcept>
#include <string>

namespace obsel {

/// Failure category; the CLI maps these onto exit codes 2, 3 and 4.
enum class ErrorKind { config, numerical, invariant };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define OBSEL_DEFINE_ERROR(Name, Kind)                                              \
  class Name : public Error {                                                       \
   public:                                                                          \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
  }

OBSEL_DEFINE_ERROR(ConfigInvalid, config);
OBSEL_DEFINE_ERROR(DimensionMismatch, config);
OBSEL_DEFINE_ERROR(UnknownSensor, config);
OBSEL_DEFINE_ERROR(UnknownDesign, config);
OBSEL_DEFINE_ERROR(TooManyCombinations, config);

OBSEL_DEFINE_ERROR(NearSingular, numerical);
OBSEL_DEFINE_ERROR(NotSPD, numerical);
OBSEL_DEFINE_ERROR(SolveFailed, numerical);
OBSEL_DEFINE_ERROR(EigenFailure, numerical);
OBSEL_DEFINE_ERROR(NoSensors, numerical);
OBSEL_DEFINE_ERROR(StagnationError, numerical);
OBSEL_DEFINE_ERROR(LibraryExhausted, numerical);

OBSEL_DEFINE_ERROR(InvariantViolation, invariant);

#undef OBSEL_DEFINE_ERROR

}  // namespace obsel
