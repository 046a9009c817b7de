#pragma once

#include <stdexcept>
#include <string>

namespace leads {

// Every failure raised by the library derives from Error. The CLI maps IoError
// to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition of an operation (non-scalar loss, missing gradient, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Operand shapes do not conform for the named operation.
class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

// Unknown environment id or other key lookup failure.
class LookupError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain of a formula.
class DomainError : public ContractError {
public:
    using ContractError::ContractError;
};

// Non-finite state, step-size underflow, or step budget exhausted.
class IntegrationError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class ConfigError : public ContractError {
public:
    using ContractError::ContractError;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace leads
