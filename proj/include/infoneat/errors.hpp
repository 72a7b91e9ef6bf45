#pragma once

#include <stdexcept>
#include <string>

namespace infoneat {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-domain values handed to an operation.
struct InputError : Error {
    using Error::Error;
};

// Dimension or sample-count requirements not met.
struct SizeError : Error {
    using Error::Error;
};

// Numerical failure (eigendecomposition breakdown, invalid spectrum).
struct NumericError : Error {
    using Error::Error;
};

// Graph-structure violation (cycles, dangling endpoints).
struct StructureError : Error {
    using Error::Error;
};

// Unparseable or truncated on-disk artifact. Carries the byte offset
// where decoding stopped when known.
struct FormatError : Error {
    explicit FormatError(const std::string& what, std::size_t offset = 0)
        : Error(offset ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
          byte_offset(offset) {}
    std::size_t byte_offset = 0;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace infoneat
