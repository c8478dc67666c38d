#pragma once

#include <stdexcept>
#include <string>

namespace brpatch {

/// Base of every error raised by the toolkit. `category()` is the short
/// machine-readable tag the CLI prints on failure.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* category() const noexcept { return "error"; }
};

/// A precondition on argument values or shapes was violated.
class DomainError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "domain"; }
};

/// The requested placement geometry cannot fit inside the image.
class InfeasibleError : public DomainError {
public:
    using DomainError::DomainError;
    const char* category() const noexcept override { return "infeasible"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "config"; }
};

class BackendError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "backend"; }
};

/// A white-box operation was requested from a backend that cannot provide it.
class CapabilityError : public BackendError {
public:
    using BackendError::BackendError;
    const char* category() const noexcept override { return "capability"; }
};

/// Optimization diverged (non-finite loss).
class TrainingError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "training"; }
};

enum class IoErrorKind {
    open_failed,
    write_failed,
    corrupt_header,
    payload_length_mismatch,
    metadata_parse,
    unsupported_format,
};

class IoError : public Error {
public:
    IoError(IoErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    IoErrorKind kind() const noexcept { return kind_; }
    const char* category() const noexcept override { return "io"; }

private:
    IoErrorKind kind_;
};

} // namespace brpatch
