#pragma once

// Little-endian primitives shared by the snapshot formats.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string_view>

namespace confsketch::detail {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_magic(std::ostream& out, std::string_view magic4, std::uint32_t version);

std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
/// Reads magic + version, throws FormatError on mismatch; returns the version.
std::uint32_t expect_magic(std::istream& in, std::string_view magic4, std::uint32_t max_version);

} // namespace confsketch::detail
