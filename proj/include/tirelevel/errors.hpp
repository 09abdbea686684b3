#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tirelevel {

/// Error categories. The numeric values double as CLI exit codes.
enum class ErrorCode : int {
    Domain = 10,
    Config = 11,
    Range = 12,
    SimulationDiverged = 13,
    Format = 14,
    Version = 15,
    Shape = 16,
    Label = 17,
    ZeroVariance = 18,
    UndefinedCorrelation = 19,
    Io = 20,
    NonFinite = 21,
    Length = 22,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

}  // namespace tirelevel
