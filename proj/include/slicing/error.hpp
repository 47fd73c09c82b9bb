#pragma once

#include <stdexcept>
#include <string>

namespace slicing {

// Invalid or out-of-range configuration. The message names the offending key.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string &msg) : std::runtime_error(msg) {}
};

// A caller broke an operation's precondition (bad action, stale cache, ...).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string &msg) : std::logic_error(msg) {}
};

// Non-finite loss or parameter detected during training.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace slicing
