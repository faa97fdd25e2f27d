#pragma once

#include <stdexcept>
#include <string>

namespace confilter {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Input that could not be parsed at all (bad JSON, malformed UTF-8).
class ParseError : public Error {
    using Error::Error;
};

// Parseable input whose fields violate the record schema.
class SchemaError : public Error {
    using Error::Error;
};

// Filesystem failure, annotated with the offending path.
class IoError : public Error {
    using Error::Error;
};

// Argument outside its documented domain (alpha not in (0,1), zero vector, ...).
class DomainError : public Error {
    using Error::Error;
};

// Calibration cannot proceed (no positive records, mixed scorer ids).
class CalibrationError : public Error {
    using Error::Error;
};

// Transport or protocol failure talking to a model endpoint.
class GatewayError : public Error {
    using Error::Error;
};

// A judge or rating response matched no decision class after re-asking.
class LabelingError : public Error {
    using Error::Error;
};

// Invalid or incomplete run configuration.
class ConfigError : public Error {
    using Error::Error;
};

// Monte Carlo simulation could not complete.
class SimulationError : public Error {
    using Error::Error;
};

}  // namespace confilter
