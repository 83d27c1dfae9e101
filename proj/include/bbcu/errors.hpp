#pragma once

#include <stdexcept>
#include <string>

namespace bbcu {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/axis mismatch. Message names the offending axis.
class DimError : public Error {
public:
    DimError(const std::string& axis, const std::string& detail)
        : Error("dimension error on axis '" + axis + "': " + detail), axis_(axis) {}
    const std::string& axis() const { return axis_; }

private:
    std::string axis_;
};

// Bad element value (e.g. non-±1 input to pack()).
class ValueError : public Error {
public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Operation called in an invalid sequence (e.g. backward without forward).
class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

// Config file problem; carries a 1-based line number (0 = not line specific).
class ConfigError : public Error {
public:
    ConfigError(int line, const std::string& msg)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_ = 0;
};

// File/serialization problem.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Numerical failure (NaN loss, undefined benefit denominator, ...).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace bbcu
