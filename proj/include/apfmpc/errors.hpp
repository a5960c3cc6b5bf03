#pragma once

#include <stdexcept>
#include <string>

namespace apfmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A vector too short to define a direction.
class DegenerateVector : public Error {
public:
    using Error::Error;
};

class NonPositiveDistance : public Error {
public:
    using Error::Error;
};

class InvalidHorizon : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class SingularInertia : public Error {
public:
    using Error::Error;
};

/// Malformed scenario text. `path` names the offending field (JSON-pointer
/// style) and `line` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string path = {}, std::size_t line = 0)
        : Error(what), path_(std::move(path)), line_(line) {}

    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string path_;
    std::size_t line_;
};

/// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace apfmpc
