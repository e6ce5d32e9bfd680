#pragma once

#include <stdexcept>
#include <string>

namespace slr {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad command-line usage or malformed configuration keys.
class UsageError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failures (missing file, unwritable path).
class IoError : public Error {
public:
    using Error::Error;
};

// Semantically invalid data: parse failures, violated invariants in inputs.
class DataError : public Error {
public:
    using Error::Error;
};

// No frame has all four reference landmarks (both shoulders, both hips).
class NoReferenceFrame : public DataError {
public:
    using DataError::DataError;
};

// Reference frame found but shoulder width or torso length is zero.
class DegenerateReference : public DataError {
public:
    using DataError::DataError;
};

// Neither wrist is present in at least two frames.
class NoWristMotion : public DataError {
public:
    using DataError::DataError;
};

}  // namespace slr
