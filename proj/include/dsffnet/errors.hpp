#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsffnet {

// Error taxonomy used across the project. Everything derives from Error so
// callers can catch the whole family at the CLI boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement; message names the offending axis.
struct DimensionError : Error {
    using Error::Error;
};

// Violated API precondition (empty input, non-scalar loss, ...).
struct ContractError : Error {
    using Error::Error;
};

// Malformed mesh file; message carries the line number.
struct ParseError : Error {
    using Error::Error;
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_ = 0;
};

// Filesystem problem (missing file, unwritable path).
struct IoError : Error {
    using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
    using Error::Error;
};

// Corrupt or unsupported checkpoint container; message carries the offset.
struct FormatError : Error {
    using Error::Error;
    FormatError(const std::string& what, std::size_t offset)
        : Error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_ = 0;
};

// Inconsistent configuration (bad widths, bad counts).
struct ConfigError : Error {
    using Error::Error;
};

// Mesh without usable extent (zero bounding box) or zero-length edges
// where positive lengths are required.
struct DegenerateMeshError : Error {
    using Error::Error;
};

} // namespace dsffnet
