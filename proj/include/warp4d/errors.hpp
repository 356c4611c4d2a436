#pragma once

#include <stdexcept>
#include <string>

namespace warp4d {

// Validation failures (bad arguments, shapes, configs). The CLI maps these
// to exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : ValidationError {
    using ValidationError::ValidationError;
};

struct DimensionError : ValidationError {
    using ValidationError::ValidationError;
};

struct InvalidCameraError : ValidationError {
    using ValidationError::ValidationError;
};

struct InvalidRotationError : ValidationError {
    using ValidationError::ValidationError;
};

struct InsufficientFramesError : ValidationError {
    using ValidationError::ValidationError;
};

// Carries the index of the first point that fell on or behind the camera
// plane, when the failing operation iterates over an indexed sequence.
struct BehindCameraError : ValidationError {
    explicit BehindCameraError(const std::string& msg, int index = -1)
        : ValidationError(msg), index(index) {}
    int index;
};

// Names the offending joint.
struct LimitViolationError : ValidationError {
    LimitViolationError(const std::string& msg, int joint)
        : ValidationError(msg), joint(joint) {}
    int joint;
};

struct DegenerateScheduleError : ValidationError {
    using ValidationError::ValidationError;
};

struct IoError : ValidationError {
    using ValidationError::ValidationError;
};

// Numeric failures (non-finite losses, divergence, failed check suites).
// The CLI maps these to exit code 2.
struct NumericFailureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace warp4d
