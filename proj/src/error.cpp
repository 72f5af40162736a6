#include "mtpp/error.hpp"

#include <iostream>
#include <mutex>
#include <thread>

#include "mtpp/parallel.hpp"

namespace mtpp {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::FileError: return "FileError";
        case ErrorCode::NonPositiveComponent: return "NonPositiveComponent";
        case ErrorCode::SumOutOfTolerance: return "SumOutOfTolerance";
        case ErrorCode::UnlocatedPoint: return "UnlocatedPoint";
        case ErrorCode::MissingCovariate: return "MissingCovariate";
        case ErrorCode::InconsistentData: return "InconsistentData";
        case ErrorCode::CoverageGap: return "CoverageGap";
        case ErrorCode::InvalidGeometry: return "InvalidGeometry";
        case ErrorCode::NonPositiveBandwidth: return "NonPositiveBandwidth";
        case ErrorCode::NonPositiveIntensityAtPoint: return "NonPositiveIntensityAtPoint";
        case ErrorCode::NegativeKValue: return "NegativeKValue";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::TooFewSimulations: return "TooFewSimulations";
        case ErrorCode::UnboundedIntensity: return "UnboundedIntensity";
        case ErrorCode::DegeneratePilot: return "DegeneratePilot";
        case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::SingularSensitivity: return "SingularSensitivity";
        case ErrorCode::DegenerateFit: return "DegenerateFit";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) {
    switch (code) {
        case ErrorCode::DegeneratePilot:
        case ErrorCode::RankDeficientDesign:
        case ErrorCode::NonConvergence:
        case ErrorCode::SingularSensitivity:
        case ErrorCode::DegenerateFit:
            return true;
        default:
            return false;
    }
}

namespace {
std::mutex warning_mutex;
WarningHandler& handler_slot() {
    static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return handler;
}
unsigned thread_cap = 0;
}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(warning_mutex);
    std::swap(handler_slot(), handler);
    return handler;
}

void warn(std::string_view message) {
    std::lock_guard lock(warning_mutex);
    if (handler_slot()) handler_slot()(message);
}

void set_max_threads(unsigned n) { thread_cap = n; }

unsigned max_threads() {
    if (thread_cap > 0) return thread_cap;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace mtpp
