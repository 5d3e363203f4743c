#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "aaas/common/errors.hpp"

// Little-endian byte serialisation used by device blobs and the wire protocol.
// Writers append to a vector; the reader walks a span with bounds checks and
// reports the byte offset of any truncation.

namespace aaas {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f64le(std::vector<std::uint8_t>& out, double v) {
    put_u64le(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_bytes(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> bytes) {
    out.insert(out.end(), bytes.begin(), bytes.end());
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32le(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

// Unchecked reads from a raw pointer. The caller guarantees bounds.
inline std::uint16_t load_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32le(const std::uint8_t* p) {
    // memcpy is the sanctioned unaligned load; it folds to a plain mov, which
    // matters because the kernel hits these on every loss lookup
    if constexpr (std::endian::native == std::endian::little) {
        std::uint32_t v;
        std::memcpy(&v, p, sizeof v);
        return v;
    }
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::uint64_t load_u64le(const std::uint8_t* p) {
    if constexpr (std::endian::native == std::endian::little) {
        std::uint64_t v;
        std::memcpy(&v, p, sizeof v);
        return v;
    }
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline double load_f64le(const std::uint8_t* p) {
    return std::bit_cast<double>(load_u64le(p));
}

// Bounds-checked sequential reader. Throws MalformedBlob with the offset at
// which the requested field would have started.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void require(std::size_t n, const char* what) const {
        if (remaining() < n) throw MalformedBlob(std::string("truncated ") + what, pos_);
    }

    std::uint8_t u8(const char* what = "u8") {
        require(1, what);
        return data_[pos_++];
    }

    std::uint16_t u16(const char* what = "u16") {
        require(2, what);
        std::uint16_t v = load_u16le(data_.data() + pos_);
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what = "u32") {
        require(4, what);
        std::uint32_t v = load_u32le(data_.data() + pos_);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what = "u64") {
        require(8, what);
        std::uint64_t v = load_u64le(data_.data() + pos_);
        pos_ += 8;
        return v;
    }

    double f64(const char* what = "f64") {
        require(8, what);
        double v = load_f64le(data_.data() + pos_);
        pos_ += 8;
        return v;
    }

    std::span<const std::uint8_t> bytes(std::size_t n, const char* what = "bytes") {
        require(n, what);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::string string(const char* what = "string") {
        std::uint32_t len = u32(what);
        auto b = bytes(len, what);
        return std::string(reinterpret_cast<const char*>(b.data()), b.size());
    }

    // Everything not yet consumed.
    std::span<const std::uint8_t> rest() {
        auto s = data_.subspan(pos_);
        pos_ = data_.size();
        return s;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace aaas
