#pragma once

#include <stdexcept>
#include <string>

namespace camforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not compose (elementwise mismatch, bad layer index, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Caller supplied an argument outside the documented domain.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// File was readable but its content is malformed or unsupported.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A numerical audit produced a non-finite intermediate or violated a bound.
class CheckError : public Error {
public:
    using Error::Error;
};

}  // namespace camforge
