#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rview {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidStateError : public Error {
public:
    using Error::Error;
};

class SteeringSingularityError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class MissingObstacleError : public Error {
public:
    using Error::Error;
};

class ScenarioGenerationError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// File carries a schema/format version this build does not understand.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Malformed input; `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace rview
