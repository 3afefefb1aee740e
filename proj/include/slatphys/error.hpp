#ifndef SLATPHYS_ERROR_HPP_
#define SLATPHYS_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace slatphys {

enum class ErrorKind {
  kInvalidArgument,
  kOutOfRange,
  kShape,
  kDegenerate,
  kAlignmentFailure,
  kNonFinite,
  kOccupancyMismatch,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

// All library failures derive from this; the CLI maps it to exit code 1 and
// prints "error: <kind>: <message>" on a single line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace slatphys

#endif  // SLATPHYS_ERROR_HPP_
