#pragma once

#include <stdexcept>
#include <string>

namespace radtk {

// Shape/dimension mismatch between tensors or layers. Message names the
// offending axis.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid hyperparameter or argument value (rate >= 1, even kernel, ...).
struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input data that parses but violates a contract (unknown label, empty class).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API misuse (backward before forward, predict on an unbuilt model).
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

// Filesystem / serialization failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Text input that failed to parse; carries the 1-based line number.
struct ParseError : std::runtime_error {
    int line;
    ParseError(const std::string& msg, int line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

}  // namespace radtk
