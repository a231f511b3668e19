#pragma once

#include <stdexcept>
#include <string>

namespace ebsim {

// Invalid argument or configuration value. The CLI maps this to exit code 2.
class param_error : public std::invalid_argument {
public:
    explicit param_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Request exceeds a configured memory/state budget. Exit code 3.
class resource_error : public std::runtime_error {
public:
    explicit resource_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Recorded data violates an exact identity; indicates a simulator bug. Exit code 4.
class integrity_error : public std::runtime_error {
public:
    explicit integrity_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A solver could not reach a trustworthy verdict (non-convergence, singular
// system, truncation-sensitive result). Exit code 4.
class diagnostic_error : public std::runtime_error {
public:
    explicit diagnostic_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ebsim
