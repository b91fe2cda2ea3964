#pragma once

#include <stdexcept>
#include <string>

namespace frictionlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or malformed input files.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// An engine declined a problem outside its domain (e.g. a path-dependent
/// claim handed to the recombining lattice).
class EngineRefusal : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown (NaN objective, probability outside (0,1), ...).
class NumericalFailure : public Error {
public:
    using Error::Error;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput(what);
}
}  // namespace detail

}  // namespace frictionlab
