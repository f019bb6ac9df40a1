#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kvn {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition: bad lengths, bad parameters, unsupported grids.
class ContractError : public Error {
public:
    using Error::Error;
};

// A time step produced a non-finite amplitude.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// An iterative procedure hit its iteration cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

// Kraus completeness, PSD residual or unitarity failure.
class ChannelError : public Error {
public:
    using Error::Error;
};

// Malformed or schema-violating experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Artifact could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace kvn
