#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "xbn/error.hpp"

namespace xbn::detail {

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_arithmetic_v<T>);
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(raw[sizeof(T) - 1 - i]);
        } else {
            bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
        }
    }
    void put_bytes(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
    const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

    template <typename T>
    T get(const char* what) {
        static_assert(std::is_arithmetic_v<T>);
        require(sizeof(T), what);
        unsigned char raw[sizeof(T)];
        if constexpr (std::endian::native == std::endian::big) {
            for (std::size_t i = 0; i < sizeof(T); ++i) raw[i] = bytes_[pos_ + sizeof(T) - 1 - i];
        } else {
            std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        }
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    void require(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::FormatError, std::string("truncated file while reading ") + what, pos_);
        }
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    const unsigned char* here() const noexcept { return bytes_.data() + pos_; }
    void skip(std::size_t n) { pos_ += n; }

private:
    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace xbn::detail
