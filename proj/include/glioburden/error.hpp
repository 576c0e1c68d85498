#pragma once

#include <stdexcept>
#include <string>

namespace glioburden {

/// Broad failure category. Maps one-to-one onto the CLI exit codes.
enum class ErrorKind {
    Usage = 1,
    Io = 2,
    Format = 3,
    Validation = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error io_error(const std::string& what) { return {ErrorKind::Io, what}; }
inline Error format_error(const std::string& what) { return {ErrorKind::Format, what}; }
inline Error validation_error(const std::string& what) { return {ErrorKind::Validation, what}; }

}  // namespace glioburden
