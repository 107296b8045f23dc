#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sc2 {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// shape / extent disagreement between operands
class DimensionError : public Error {
public:
    using Error::Error;
};

// invalid construction parameters (kernel sizes, channel counts, schema)
class ConfigError : public Error {
public:
    using Error::Error;
};

// caller broke a documented precondition
class ContractError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// bad magic, unknown version, malformed container
class FormatError : public Error {
public:
    using Error::Error;
};

class FramingError : public Error {
public:
    FramingError(const std::string & what, std::size_t byte_offset)
        : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"), byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

class EncodingError : public Error {
public:
    using Error::Error;
};

// bitstream produced by a model with a different config digest
class ConfigMismatchError : public Error {
public:
    using Error::Error;
};

class LoadError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class UnsupportedVariantError : public Error {
public:
    using Error::Error;
};

} // namespace sc2
