#pragma once

#include <stdexcept>
#include <string>

namespace sgldp {

/// Invalid model or experiment parameters. `field()` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// State left the finite range or crossed the configured V-norm ceiling.
class BlowUpError : public std::runtime_error {
public:
    BlowUpError(double t, double v_norm)
        : std::runtime_error("solution blow-up at t=" + std::to_string(t) +
                             " (|u|_V=" + std::to_string(v_norm) + ")"),
          t_(t), v_norm_(v_norm) {}

    double time() const noexcept { return t_; }
    double v_norm() const noexcept { return v_norm_; }

private:
    double t_;
    double v_norm_;
};

/// Malformed or incompatible file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sgldp
