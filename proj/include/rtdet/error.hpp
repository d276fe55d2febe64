#pragma once

#include <stdexcept>
#include <string>

namespace rtdet {

/// Base of every error thrown by the toolkit. Subclasses live next to the
/// operation that raises them.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violated a documented precondition (bad box, bad probability, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Filesystem or stream failure not covered by a more specific error.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace rtdet
