#pragma once

#include <stdexcept>
#include <string>

namespace voltmargin {

/// Invalid parameters or preconditions supplied by the caller.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input file. Carries the location when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, int line, const std::string& message)
        : std::runtime_error(format(source, line, message)), source_(source), line_(line) {}

    const std::string& source() const { return source_; }
    int line() const { return line_; }

private:
    static std::string format(const std::string& source, int line, const std::string& message) {
        std::string out = source;
        if (line > 0) out += ":" + std::to_string(line);
        return out + ": " + message;
    }

    std::string source_;
    int line_;
};

/// A numerical computation failed (divergence, singular system, non-finite value).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace voltmargin
