#pragma once

#include <stdexcept>
#include <string>

namespace seqkrr {

// Error taxonomy mirrors the CLI exit codes:
//   ConfigError -> 2, NumericsError -> 3, InvariantError -> 4.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Ridge-less self-consistency has no positive solution: the truncated
// spectrum carries fewer positive modes than samples. Signals "add levels
// or reduce N"; continuing silently would fabricate numbers.
class ModeDeficitError : public NumericsError {
public:
    explicit ModeDeficitError(const std::string& msg) : NumericsError(msg) {}
};

class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace seqkrr
