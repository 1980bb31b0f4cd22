#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Error categories map onto CLI exit codes: configuration problems exit 1,
// bad input data exits 2, everything else raised while running exits 3.
enum class ErrorKind { config, data, runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Invalid generator, model or experiment parameters.
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Malformed dataset or log file.
struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// A device cannot be split into train/val/test.
struct SplitError : Error {
    explicit SplitError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Bad call arguments (empty inputs, out-of-range counts).
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

/// Mismatched vector or matrix dimensions.
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

/// Non-finite model output.
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

/// A training round could not make progress.
struct RoundError : Error {
    explicit RoundError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

}  // namespace fedsim
