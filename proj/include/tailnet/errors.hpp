#pragma once

#include <stdexcept>
#include <string>

namespace tailnet {

/// Base of all library errors. Carries the process exit code the CLI maps it to.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

/// Unreadable or malformed input data.
class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(what, 2) {}
};

/// Parameter outside its admissible range, unknown option, stale or mixed artifacts.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// Numerical failure on otherwise valid input (degenerate vectors, rank deficiency).
class ComputationError : public Error {
public:
    explicit ComputationError(const std::string& what) : Error(what, 1) {}
};

}  // namespace tailnet
