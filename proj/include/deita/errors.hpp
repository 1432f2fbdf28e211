#pragma once

#include <stdexcept>
#include <string>

namespace deita {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files, schema violations, broken invariants. CLI exit code 2.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Completion endpoint failures. CLI exit code 3.
class GatewayError : public Error {
public:
    explicit GatewayError(const std::string& msg) : Error(msg) {}
};

} // namespace deita
