#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "tirelevel/errors.hpp"

namespace tirelevel::io {

// Little-endian primitive I/O shared by the dataset and checkpoint formats.

template <typename T>
    requires std::is_arithmetic_v<T>
std::array<char, sizeof(T)> to_le_bytes(T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    return bytes;
}

template <typename T>
    requires std::is_arithmetic_v<T>
T from_le_bytes(std::array<char, sizeof(T)> bytes) {
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <typename T>
    void put(T value) {
        const auto bytes = to_le_bytes(value);
        os_.write(bytes.data(), bytes.size());
    }

    template <typename T>
    void put_all(std::span<const T> values) {
        for (const T& v : values) put(v);
    }

    void put_raw(std::string_view bytes) { os_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

    void put_string(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_raw(s);
    }

    bool good() const { return os_.good(); }

private:
    std::ostream& os_;
};

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    template <typename T>
    T get() {
        std::array<char, sizeof(T)> bytes;
        read_exact(bytes.data(), bytes.size());
        return from_le_bytes<T>(bytes);
    }

    template <typename T>
    std::vector<T> get_vector(std::size_t n) {
        std::vector<T> out(n);
        for (auto& v : out) v = get<T>();
        return out;
    }

    std::string get_raw(std::size_t n) {
        std::string s(n, '\0');
        read_exact(s.data(), n);
        return s;
    }

    std::string get_string(std::size_t max_len = 1 << 16) {
        const auto n = get<std::uint32_t>();
        require(n <= max_len, ErrorCode::Format, "string length field is implausible");
        return get_raw(n);
    }

    bool at_eof() {
        return is_.peek() == std::char_traits<char>::eof();
    }

private:
    void read_exact(char* dst, std::size_t n) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            fail(ErrorCode::Format, "file is truncated");
        }
    }

    std::istream& is_;
};

}  // namespace tirelevel::io
