#pragma once

#include <stdexcept>
#include <string>

namespace microast {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents or channel counts do not satisfy an operator contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A numeric argument is outside its domain (e.g. non-positive sigma).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Container magic, version, CRC or manifest layout is invalid.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Weights do not match the architecture described by the channel plan.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read, written, or ended early.
class IoError : public Error {
public:
    using Error::Error;
};

/// Image data is in an unsupported format or failed to decode.
class ImageFormatError : public IoError {
public:
    using IoError::IoError;
};

}  // namespace microast
