#pragma once

#include <cstdint>
#include <string>

namespace mpdcheck {

// Appends fixed-width little-endian fields to a byte string. Every encoder in
// the library writes through this so that equal states produce equal bytes.
class ByteWriter {
public:
    explicit ByteWriter(std::string& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }

    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v & 0xFF));
        u8(static_cast<std::uint8_t>(v >> 8));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    // Descriptor indices fit a byte (CONN_MAX <= 255); 0xFF encodes INVALID_FD.
    void fd(std::uint16_t index) { u8(index >= 0xFF ? 0xFF : static_cast<std::uint8_t>(index)); }

    void flag(bool b) { u8(b ? 1 : 0); }

private:
    std::string& out_;
};

}  // namespace mpdcheck
