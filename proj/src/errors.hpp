#pragma once

#include <stdexcept>
#include <string>

namespace placer {

enum class ErrorKind {
    InvalidArgument,
    Config,
    Io,
    Shape,
    Schedule,
    Resolution,
    NumericalDivergence,
    InsertionFailure,
    DegenerateMask,
    CacheMiss,
    Transport,
    Unsupported,
    Internal,
};

// Single exception type for the whole core; the kind maps 1:1 onto the
// C API status codes and CLI exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Schedule: return "schedule";
        case ErrorKind::Resolution: return "resolution";
        case ErrorKind::NumericalDivergence: return "numerical_divergence";
        case ErrorKind::InsertionFailure: return "insertion_failure";
        case ErrorKind::DegenerateMask: return "degenerate_mask";
        case ErrorKind::CacheMiss: return "cache_miss";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::Internal: return "internal";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace placer
