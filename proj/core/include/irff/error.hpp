#pragma once

#include <stdexcept>
#include <string>

#include "irff/real.hpp"

IRFF_BEGIN_NAMESPACE

/// Base class of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes are incompatible with the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A configuration value violates a constraint (divisibility, ranges, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Values fall outside the domain an operation is defined on.
class DomainError : public Error {
public:
    using Error::Error;
};

/// The API was used out of contract (non-scalar backward, missing gradient).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Dataset content is inconsistent (missing counterparts, bad images).
class DataError : public Error {
public:
    using Error::Error;
};

/// File system or encoding failure.
class IoError : public Error {
public:
    using Error::Error;
};

IRFF_END_NAMESPACE
