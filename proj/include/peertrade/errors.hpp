#pragma once

#include <stdexcept>
#include <string>

namespace peertrade {

// Invalid configuration or parameter values. Messages name the offending field.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised when a market clearing is requested with an empty provider or
// receiver side.
struct NoMarketError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Problems with input data files. Each failure mode gets its own kind so
// callers (and tests) can tell them apart without parsing messages.
struct DataError : std::runtime_error {
    enum class Kind {
        MalformedRow,
        SlotGap,
        NegativeValue,
        NonFinite,
        DuplicateKey,
        MissingReading,
    };

    DataError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}

    Kind kind;
};

}  // namespace peertrade
