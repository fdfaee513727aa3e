#pragma once

#include <stdexcept>
#include <string>

namespace qnd {

/// Base class for all library errors. exitCode() drives the CLI exit-code
/// contract: 2 = configuration/schema, 3 = numerical guard, 4 = statistical.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exitCode() const { return 3; }
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, int line = 0)
        : Error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
    int line() const { return line_; }
    int exitCode() const override { return 2; }

private:
    int line_;
};

class SchemaError : public Error {
public:
    using Error::Error;
    int exitCode() const override { return 2; }
};

// Numerical guards (exit code 3).

class DiagonalityError : public Error {
public:
    using Error::Error;
};

class DegenerateRate : public Error {
public:
    using Error::Error;
};

class StepTooLarge : public Error {
public:
    using Error::Error;
};

class StateInvalid : public Error {
public:
    using Error::Error;
};

class DegenerateConditioning : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class DegenerateFilter : public Error {
public:
    using Error::Error;
};

class InsufficientWindow : public Error {
public:
    using Error::Error;
};

// Statistical anomalies (exit code 4).

class TooManyUnresolved : public Error {
public:
    using Error::Error;
    int exitCode() const override { return 4; }
};

class NoExtinctionChannels : public Error {
public:
    using Error::Error;
    int exitCode() const override { return 4; }
};

class EmptyCell : public Error {
public:
    using Error::Error;
    int exitCode() const override { return 4; }
};

}  // namespace qnd
