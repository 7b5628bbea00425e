#pragma once

#include <stdexcept>
#include <string>

namespace pixcorr {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or size mismatch between tensors. Message names both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Bad or missing configuration: unknown keys, absent files, invalid values.
struct ConfigError : Error {
    using Error::Error;
};

// Corrupt or truncated on-disk data (checkpoints, pixmaps, datasets).
struct FormatError : Error {
    using Error::Error;
};

// Numeric divergence (NaN/inf loss) detected by a training guard.
struct NumericError : Error {
    using Error::Error;
};

} // namespace pixcorr
