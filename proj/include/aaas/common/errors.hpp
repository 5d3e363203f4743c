#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aaas {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---- riskcore ----

class IndexOutOfCatalog : public Error {
public:
    IndexOutOfCatalog(std::uint32_t event_id, std::uint32_t catalog_size)
        : Error("event id " + std::to_string(event_id) + " outside catalog of size " +
                std::to_string(catalog_size)),
          event_id(event_id),
          catalog_size(catalog_size) {}
    std::uint32_t event_id;
    std::uint32_t catalog_size;
};

class EmptyTable : public Error {
public:
    EmptyTable() : Error("year loss table is empty") {}
};

class InvalidReturnPeriod : public Error {
public:
    explicit InvalidReturnPeriod(double value)
        : Error("return period must be > 1, got " + std::to_string(value)) {}
};

class InvalidAlpha : public Error {
public:
    explicit InvalidAlpha(double value)
        : Error("alpha must lie strictly in (0,1), got " + std::to_string(value)) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what) {}
};

// Blob parse failure; `offset` is the byte position the parser was at.
class MalformedBlob : public Error {
public:
    MalformedBlob(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
    std::size_t offset;
};

class RangeOutOfBounds : public Error {
public:
    explicit RangeOutOfBounds(const std::string& what) : Error(what) {}
};

// ---- datagen ----

class InvalidSpec : public Error {
public:
    explicit InvalidSpec(const std::string& what) : Error(what) {}
};

// ---- bench / IO ----

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace aaas
