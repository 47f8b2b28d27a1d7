#include "photonstat/error.hpp"

namespace photonstat {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Capacity: return "CapacityError";
        case ErrorKind::InsufficientData: return "InsufficientData";
        case ErrorKind::UndefinedMean: return "UndefinedMean";
        case ErrorKind::NoSolution: return "NoSolution";
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::AmbiguousClock: return "AmbiguousClock";
        case ErrorKind::DegenerateCurve: return "DegenerateCurve";
        case ErrorKind::NegativeContrast: return "NegativeContrast";
        case ErrorKind::Io: return "IoError";
    }
    return "Unknown";
}

}  // namespace photonstat
