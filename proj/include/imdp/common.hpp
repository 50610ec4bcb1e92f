// Shared error types and small utilities.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace imdp {

// ---------------------------------------------------------------------------
// Errors. Thrown by library code; the CLI maps categories to exit codes.
// ---------------------------------------------------------------------------

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct ValueRange : Error {
    using Error::Error;
};
struct NonFinite : Error {
    using Error::Error;
};
struct ChannelMismatch : Error {
    using Error::Error;
};
struct DegenerateKernel : Error {
    using Error::Error;
};
struct UnprojectedKernel : Error {
    using Error::Error;
};
struct PaddingRequired : Error {
    using Error::Error;
};
struct InvalidBox : Error {
    using Error::Error;
};
struct MissingGroundTruth : Error {
    using Error::Error;
};
struct NonFiniteLoss : Error {
    using Error::Error;
};
struct EmptyInput : Error {
    using Error::Error;
};

/// Problems with on-disk data (datasets, images). CLI exit code 3.
struct DataError : Error {
    using Error::Error;
};
struct MissingMask : DataError {
    using DataError::DataError;
};
struct UnreadableImage : DataError {
    using DataError::DataError;
};
struct RegionTooLarge : DataError {
    using DataError::DataError;
};
struct EmptyDataset : DataError {
    using DataError::DataError;
};

/// Problems with configuration files or flags. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

/// Problems with checkpoint files. CLI exit code 4.
struct CheckpointError : Error {
    using Error::Error;
};
struct VersionMismatch : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CorruptFile : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointMismatch : CheckpointError {
    using CheckpointError::CheckpointError;
};

// ---------------------------------------------------------------------------

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

template <class E>
inline void check_or(bool cond, const std::string& msg) {
    if (!cond) throw E(msg);
}

}  // namespace imdp
