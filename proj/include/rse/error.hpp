#pragma once

#include <stdexcept>
#include <string>

namespace rse {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or unsupported file content.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Image or patch geometry that does not fit the requested grid.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Tensor or parameter shapes that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity reached a place that requires finite values.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Invalid argument value, color space or configuration entry.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace rse
