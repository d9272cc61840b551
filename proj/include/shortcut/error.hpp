#pragma once

#include <stdexcept>
#include <string>

namespace shortcut {

/// Failure classes, each mapped to a distinct CLI exit code.
enum class ErrorKind { config, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numeric: return 4;
        }
        return 1;
    }

private:
    ErrorKind kind_;
};

/// Invalid configuration, arguments or parameter ranges.
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Malformed or inconsistent input data (file formats, shapes, lookups).
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Numerical breakdown: overflow, divergence, ill-conditioned kernels.
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

} // namespace shortcut
