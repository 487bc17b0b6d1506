#pragma once

#include <stdexcept>
#include <string>

namespace elmnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A configuration value violates its documented invariant. `field` names the
/// offending key (e.g. "hidden.d_m") when known.
class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& msg, std::string field = {})
        : Error(field.empty() ? msg : field + ": " + msg), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity produced inside a numerical routine.
class NumericFault : public Error {
public:
    using Error::Error;
};

class FitFailure : public Error {
public:
    using Error::Error;
};

}  // namespace elmnet
