#pragma once

#include <stdexcept>
#include <string>

namespace sliceforge {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid ScenarioConfig, TrainConfig or malformed input document.
class ConfigError : public Error {
public:
    using Error::Error;
};

// commit_slice was handed placements that do not fit.
class CommitError : public Error {
public:
    using Error::Error;
};

// Tensor or layer dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// API called outside its contract (e.g. baseline_order with a dynamic kind).
class UsageError : public Error {
public:
    using Error::Error;
};

// Non-finite values reached the optimizer or loss.
class NumericError : public Error {
public:
    using Error::Error;
};

// Checkpoint or result file could not be read/written or parsed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sliceforge
