#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pne {

enum class ErrorKind {
    InvalidConfig,
    InvalidKernel,
    UnderResolvedKernel,
    DomainError,
    InvalidNonlinearity,
    InvalidInput,
    StepFailure,
    NonConvergence,
    NoPositiveOrbit,
    OutOfScopeRegime,
    InternalError,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::InvalidKernel: return "invalid-kernel";
    case ErrorKind::UnderResolvedKernel: return "under-resolved-kernel";
    case ErrorKind::DomainError: return "domain-error";
    case ErrorKind::InvalidNonlinearity: return "invalid-nonlinearity";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::StepFailure: return "step-failure";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::NoPositiveOrbit: return "no-positive-orbit";
    case ErrorKind::OutOfScopeRegime: return "out-of-scope-regime";
    case ErrorKind::InternalError: return "internal-error";
    }
    return "unknown";
}

/// CLI exit contract: 1 bad input, 2 numerical non-convergence, 3 internal.
constexpr int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NonConvergence: return 2;
    case ErrorKind::InternalError: return 3;
    default: return 1;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace pne
