#pragma once

#include <stdexcept>
#include <string>

namespace es {

// Violated precondition or malformed argument.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A judge response that does not carry a usable score.
struct ParseFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Judge endpoint unreachable after the configured number of retries.
struct JudgeUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace es
