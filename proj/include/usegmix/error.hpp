#pragma once

#include <stdexcept>
#include <string>

namespace usegmix {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unsupported encoded image data.
class DecodeError : public Error {
public:
    using Error::Error;
};

/// Two rasters (or vectors) that must agree in shape do not.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures; the message always carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Failures reported by, or while talking to, an external backend process.
class BackendError : public Error {
public:
    using Error::Error;
};

}  // namespace usegmix
