#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace curator {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input failed a precondition or invariant check.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A line-oriented file could not be parsed. Carries the 1-based line number
/// and the offending field name (empty when the whole line is unreadable).
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::string field, const std::string& what)
        : Error("line " + std::to_string(line) + (field.empty() ? "" : ", field '" + field + "'") +
                ": " + what),
          line_(line),
          field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

/// Configuration file or flag combination is unusable.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// I/O against the filesystem failed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace curator
