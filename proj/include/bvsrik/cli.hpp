#pragma once

#include <ostream>
#include <string>
#include <exception>

namespace bvsrik {

/// Entry point behind the bvsrik executable: subcommands degrade, train,
/// infer, eval and selftest. Failures print one line
///   error[<ErrorClass>]: <message>
/// to `err` and return a nonzero status.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Short class name used in error lines (ValidationError, IoError, ...).
std::string error_class(const std::exception& e);

}  // namespace bvsrik
