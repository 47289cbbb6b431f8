#ifndef BIFLAB_ERRORS_HPP
#define BIFLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace biflab {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct NoEscapeCertificate : Error {
    explicit NoEscapeCertificate(const std::string& msg) : Error(msg) {}
};

struct DegenerateLeadingCoefficient : Error {
    explicit DegenerateLeadingCoefficient(const std::string& msg) : Error(msg) {}
};

struct StartOnExceptionalOrbit : Error {
    explicit StartOnExceptionalOrbit(const std::string& msg) : Error(msg) {}
};

struct ClippedFractionExcessive : Error {
    explicit ClippedFractionExcessive(const std::string& msg) : Error(msg) {}
};

struct DegreeCapExceeded : Error {
    explicit DegreeCapExceeded(const std::string& msg) : Error(msg) {}
};

struct BranchCapExceeded : Error {
    explicit BranchCapExceeded(const std::string& msg) : Error(msg) {}
};

struct InsufficientPoints : Error {
    explicit InsufficientPoints(const std::string& msg) : Error(msg) {}
};

struct BaseNotRepelling : Error {
    explicit BaseNotRepelling(const std::string& msg) : Error(msg) {}
};

struct MalformedGrid : Error {
    explicit MalformedGrid(const std::string& msg) : Error(msg) {}
};

struct PreconditionViolation : Error {
    explicit PreconditionViolation(const std::string& msg) : Error(msg) {}
};

} // namespace biflab

#endif
