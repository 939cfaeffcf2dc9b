#pragma once

#include <stdexcept>
#include <string>

namespace disco {

/* Raised for malformed arguments: non-finite logits, bad labels, bad masses. */
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/* Raised when a configuration value or key is rejected. */
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/* Raised when training cannot produce a usable model. */
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw InvalidInput(what);
}

} // namespace disco
