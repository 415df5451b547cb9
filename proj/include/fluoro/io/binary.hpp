#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fluoro/errors.hpp"

namespace fluoro::io {

/// Little-endian byte sink shared by the bag and checkpoint formats.
class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    void string(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; truncation raises FormatError.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    void raw(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::string string() {
        const auto n = u32();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError(what_ + ": truncated");
    }
    void expect_end() const {
        if (remaining() != 0) throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace fluoro::io
