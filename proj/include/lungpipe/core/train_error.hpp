#pragma once

#include <stdexcept>
#include <string>

namespace lp {

// Optimization blew up (non-finite loss); carries where it happened.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lp
