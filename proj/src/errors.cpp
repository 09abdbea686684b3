#include "tirelevel/errors.hpp"

namespace tirelevel {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Domain: return "domain_error";
        case ErrorCode::Config: return "config_error";
        case ErrorCode::Range: return "range_error";
        case ErrorCode::SimulationDiverged: return "simulation_diverged";
        case ErrorCode::Format: return "format_error";
        case ErrorCode::Version: return "version_mismatch";
        case ErrorCode::Shape: return "shape_mismatch";
        case ErrorCode::Label: return "label_out_of_range";
        case ErrorCode::ZeroVariance: return "zero_variance";
        case ErrorCode::UndefinedCorrelation: return "undefined_correlation";
        case ErrorCode::Io: return "io_error";
        case ErrorCode::NonFinite: return "non_finite";
        case ErrorCode::Length: return "length_mismatch";
    }
    return "unknown_error";
}

}  // namespace tirelevel
