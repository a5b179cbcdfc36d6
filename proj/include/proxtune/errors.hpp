#pragma once

#include <stdexcept>
#include <string>

namespace proxtune {

// Bad config file, invalid key, inconsistent experiment description. CLI exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss during training. CLI exit 3.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable/unwritable file. CLI exit 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint does not match the model spec it is loaded against. CLI exit 5.
struct ArchiveMismatchError : std::runtime_error {
    explicit ArchiveMismatchError(const std::string& what) : std::runtime_error(what) {}
};

// Caller broke an API precondition (shape mismatch, stale cache, ...).
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace proxtune
