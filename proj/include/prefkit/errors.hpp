#pragma once

#include <stdexcept>
#include <string>

namespace prefkit {

// Error taxonomy mirrors the CLI exit codes:
//   ParseError  -> 2  (malformed input files)
//   DataError   -> 3  (referential / coverage problems in well-formed data)
//   ConfigError -> 4  (invalid configuration or flags)
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Named conditions from the module contracts.

class MixedPrompt : public DataError {
public:
    using DataError::DataError;
};

class DanglingResponse : public DataError {
public:
    using DataError::DataError;
};

class RankingMismatch : public DataError {
public:
    using DataError::DataError;
};

class MissingScore : public DataError {
public:
    using DataError::DataError;
};

class NoResponses : public DataError {
public:
    using DataError::DataError;
};

class TooFewResponses : public DataError {
public:
    using DataError::DataError;
};

class WrongCount : public DataError {
public:
    using DataError::DataError;
};

class DimensionMismatch : public DataError {
public:
    using DataError::DataError;
};

class NoPairs : public DataError {
public:
    using DataError::DataError;
};

class EmptyInput : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class CapacityTooSmall : public ConfigError {
public:
    using ConfigError::ConfigError;
};

}  // namespace prefkit
