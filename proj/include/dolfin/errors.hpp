#pragma once

#include <stdexcept>
#include <string>

namespace dolfin {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Numerical rank lower than required; carries the offending column when known.
struct RankError : Error {
    int column = -1;
    RankError(const std::string& msg, int col) : Error(msg), column(col) {}
    explicit RankError(const std::string& msg) : Error(msg) {}
};

// Iterative method failed to converge.
struct NumericalError : Error {
    int iterations = 0;
    NumericalError(const std::string& msg, int iters) : Error(msg), iterations(iters) {}
};

// A documented precondition was violated by the caller.
struct ContractViolation : Error {
    using Error::Error;
};

// No room left orthogonal to the memory.
struct CapacityError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct StateError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

// Malformed input file; carries a byte offset or line number when known.
struct ParseError : Error {
    long long offset = -1;
    ParseError(const std::string& msg, long long off) : Error(msg), offset(off) {}
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Bad checkpoint magic/version/truncation.
struct FormatError : Error {
    long long offset = -1;
    FormatError(const std::string& msg, long long off) : Error(msg), offset(off) {}
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Malformed message between protocol participants.
struct ProtocolError : Error {
    using Error::Error;
};

}  // namespace dolfin
