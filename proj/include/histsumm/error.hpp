#pragma once

#include <stdexcept>
#include <string>

namespace histsumm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Input parsed fine but violates a domain invariant (duplicate id, missing summary, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An operation that needs at least one element received none.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Inconsistent configuration (dimension mismatch, bad enum, missing path, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace histsumm
