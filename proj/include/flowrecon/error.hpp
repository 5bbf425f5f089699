#pragma once

#include <stdexcept>
#include <string>

namespace flowrecon {

/// Base class for all library failures. The CLI maps the three subclasses
/// onto distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition (exit code 2).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical procedure could not produce a valid answer (exit code 3).
class NumericalFailure : public Error {
public:
    using Error::Error;
};

/// File could not be read, written or parsed (exit code 4).
class IoFailure : public Error {
public:
    using Error::Error;
};

/// A physical-space point does not lie in the closure of the flow domain.
class PointOutsideDomain : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

} // namespace flowrecon
