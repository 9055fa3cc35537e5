#pragma once

#include <stdexcept>
#include <string>

namespace slhswitch {

enum class ErrorKind {
    invalid_dimension,
    invalid_embed,
    signature_mismatch,
    invalid_label,
    invalid_argument,
    missing_label,
    divergence,
    config,
    budget,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised by the integrator when a label blows past the norm ceiling or
/// produces NaN/Inf. Carries the offending step index.
class DivergenceError : public Error {
public:
    DivergenceError(long step, double time, const std::string &what)
        : Error(ErrorKind::divergence, what), step_(step), time_(time) {}

    long step() const noexcept { return step_; }
    double time() const noexcept { return time_; }

private:
    long step_;
    double time_;
};

} // namespace slhswitch
