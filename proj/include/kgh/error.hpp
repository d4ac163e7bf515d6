#pragma once

#include <stdexcept>
#include <string>

namespace kgh {

// Base for every error the library raises. The CLI maps subclasses onto
// exit codes (validation/parse -> 2, service -> 3, protocol -> 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Instantiating a template would make entity stripping ambiguous.
class AmbiguityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// An external service (scorer or paraphraser) could not be reached.
class ServiceError : public Error {
public:
    using Error::Error;
};

// An external service answered with something that violates the wire contract.
class ProtocolError : public Error {
public:
    using Error::Error;
};

} // namespace kgh
