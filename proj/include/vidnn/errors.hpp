#pragma once

#include <stdexcept>
#include <string>

namespace vidnn {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4, IoError -> 5.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or missing configuration (keys, values, flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Problems with user-supplied data: manifests, labels, inconsistent shapes.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Filesystem and file-format failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Library-level contract violations. These surface through the CLI as data
// errors: at that level they always stem from inconsistent data or config.

/// Tensor/layer shape mismatch.
class DimensionError : public DataError {
public:
    using DataError::DataError;
};

/// Model structure problems (missing layers, bad descriptors, bad junctions).
class StructureError : public DataError {
public:
    using DataError::DataError;
};

/// API misuse such as backward without a completed forward.
class StateError : public DataError {
public:
    using DataError::DataError;
};

/// Checkpoint container rejections, each kind distinct and testable.
class CheckpointError : public IoError {
public:
    enum class Kind { bad_magic, bad_version, truncated, trailing_bytes, shape_mismatch, bad_descriptor };

    CheckpointError(Kind kind, const std::string& msg) : IoError(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

}  // namespace vidnn
