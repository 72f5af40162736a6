#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mtpp {

enum class ErrorCode {
    // input / data errors
    InvalidArgument,
    ParseError,
    FileError,
    NonPositiveComponent,
    SumOutOfTolerance,
    UnlocatedPoint,
    MissingCovariate,
    InconsistentData,
    CoverageGap,
    InvalidGeometry,
    NonPositiveBandwidth,
    NonPositiveIntensityAtPoint,
    NegativeKValue,
    GridMismatch,
    TooFewSimulations,
    UnboundedIntensity,
    // numerical failures
    DegeneratePilot,
    RankDeficientDesign,
    NonConvergence,
    SingularSensitivity,
    DegenerateFit,
};

std::string_view to_string(ErrorCode code);

/// True for codes that signal a numerical failure rather than bad input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Non-fatal diagnostics (e.g. clipped linear predictors). The default handler
/// writes to stderr; install a different one before starting any work.
/// Returns the handler that was replaced.
using WarningHandler = std::function<void(std::string_view)>;
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace mtpp
