#pragma once

#include <stdexcept>
#include <string>

namespace recam {

// Base for everything this library throws on purpose.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes or axes that do not line up.
class dimension_error : public error {
public:
    using error::error;
};

// Invalid argument values (out-of-range label, rate >= 1, non-scalar loss, ...).
class argument_error : public error {
public:
    using error::error;
};

// Inconsistent static configuration (d_model not divisible by heads, unknown rule, ...).
class config_error : public error {
public:
    using error::error;
};

// Malformed or invalid input data (bad JSONL line, missing placeholder, ...).
class data_error : public error {
public:
    using error::error;
};

// Structurally valid input that leaves an operation with nothing to do
// (all positions masked, empty segment, zero maskable tokens).
class degenerate_input_error : public error {
public:
    using error::error;
};

// Corrupt or version-mismatched checkpoint/cache files.
class format_error : public error {
public:
    using error::error;
};

// A scorer backend asked to do something it does not support.
class capability_error : public error {
public:
    using error::error;
};

// Network-level failure talking to a live scoring backend.
class transport_error : public error {
public:
    transport_error(const std::string& msg, int attempts_made)
        : error(msg), attempts(attempts_made) {}
    int attempts = 0;
};

} // namespace recam
