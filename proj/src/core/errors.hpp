#pragma once

#include <stdexcept>
#include <string>

namespace uwd {

// Contract violation: bad shapes, out-of-range arguments, invalid config.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad or missing input data: files, directories, checkpoints, images.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal failure at run time: non-finite values, exhausted resources.
class ComputeError : public std::runtime_error {
public:
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace uwd
