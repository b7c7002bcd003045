#pragma once

#include <stdexcept>
#include <string>

namespace lp {

// Bad argument, violated precondition, or inconsistent domain data.
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// File or format problem: missing file, malformed header, size mismatch.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lp
