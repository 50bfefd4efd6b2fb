#pragma once

#include <filesystem>
#include <ostream>

namespace bvsrik {

/// Runs the built-in suites (filter oracle, gradients, delta identity,
/// metrics), printing one PASS/FAIL line each plus the parameter counts.
/// Atom renders are written as grayscale PNGs when dump_dir is non-empty.
/// Returns the number of failed suites.
int run_selftest(std::ostream& out, const std::filesystem::path& dump_dir = {});

/// Reference parameter count for the full configuration, in millions.
inline constexpr double kReferenceParamsMillions = 9.30;

}  // namespace bvsrik
