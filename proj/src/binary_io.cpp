#include "binary_io.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "confsketch/errors.hpp"

namespace confsketch::detail {
namespace {

template <typename T>
void put(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
        throw FormatError("unexpected end of binary input");
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
    }
    return v;
}

} // namespace

void write_u8(std::ostream& out, std::uint8_t v) { put(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

void write_magic(std::ostream& out, std::string_view magic4, std::uint32_t version) {
    out.write(magic4.data(), 4);
    write_u32(out, version);
}

std::uint8_t read_u8(std::istream& in) { return get<std::uint8_t>(in); }
std::uint32_t read_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }

std::uint32_t expect_magic(std::istream& in, std::string_view magic4, std::uint32_t max_version) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic4.data(), 4) != 0) {
        throw FormatError("bad magic, expected '" + std::string(magic4) + "'");
    }
    const auto version = read_u32(in);
    if (version == 0 || version > max_version) {
        throw FormatError("unsupported " + std::string(magic4) + " version " + std::to_string(version));
    }
    return version;
}

} // namespace confsketch::detail
