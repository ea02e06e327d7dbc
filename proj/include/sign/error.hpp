#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sign {

enum class ErrorKind {
    config,
    data,
    format,
    divergence,
    io,
    range,
    dimension,
    contract,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// Malformed file contents. `offset` is the byte offset (binary formats) or the
// 1-based line number (text formats) where parsing failed.
struct FormatError : Error {
    FormatError(const std::string& what, std::size_t offset)
        : Error(ErrorKind::format, what), offset(offset) {}
    std::size_t offset;
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct RangeError : Error {
    explicit RangeError(const std::string& what) : Error(ErrorKind::range, what) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error(ErrorKind::dimension, what) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

// Non-finite values met during a numerical procedure. `index` is the step or
// grid index at which it happened.
struct DivergenceError : Error {
    DivergenceError(const std::string& what, std::size_t index)
        : Error(ErrorKind::divergence, what), index(index) {}
    std::size_t index;
};

}  // namespace sign
