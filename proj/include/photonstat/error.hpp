#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace photonstat {

enum class ErrorKind {
    InvalidArgument,
    Capacity,
    InsufficientData,
    UndefinedMean,
    NoSolution,
    NonConvergence,
    AmbiguousClock,
    DegenerateCurve,
    NegativeContrast,
    Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(ErrorKind::InvalidArgument, message);
}

}  // namespace photonstat
