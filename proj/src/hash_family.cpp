#include "confsketch/hash_family.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

#include "confsketch/errors.hpp"
#include "confsketch/random.hpp"

namespace confsketch {
namespace {

constexpr std::uint64_t kP = HashFamily::kPrime;

std::uint64_t reduce_mersenne(uint128 x) noexcept {
    // x < 2^122 here, two folds bring it below 2p.
    std::uint64_t lo = static_cast<std::uint64_t>(x & kP);
    std::uint64_t hi = static_cast<std::uint64_t>(x >> 61);
    std::uint64_t r = lo + (hi & kP) + (hi >> 61);
    r = (r & kP) + (r >> 61);
    return r >= kP ? r - kP : r;
}

std::uint64_t load_le(const unsigned char* p, std::size_t n) noexcept {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

// Counter-based stream keyed by (seed, row): the k-th 61-bit draw.
std::uint64_t coefficient_draw(std::uint64_t seed, std::size_t row, std::uint64_t k) noexcept {
    return mix64(derive_seed(seed, row) ^ mix64(k)) >> 3;
}

} // namespace

HashFamily::HashFamily(std::uint64_t seed, std::size_t depth, std::size_t width)
    : seed_(seed), width_(width) {
    if (depth == 0) {
        throw ConfigError("hash family depth must be at least 1");
    }
    if (width < 2) {
        throw ConfigError("hash family width must be at least 2, got " + std::to_string(width));
    }
    coefficients_.reserve(depth);
    for (std::size_t row = 0; row < depth; ++row) {
        std::uint64_t k = 0;
        std::uint64_t a = 0;
        do {
            a = coefficient_draw(seed, row, k++);
        } while (a == 0 || a >= kP);
        std::uint64_t b = 0;
        do {
            b = coefficient_draw(seed, row, k++);
        } while (b >= kP);
        coefficients_.push_back({a, b});
    }
}

std::uint64_t HashFamily::fingerprint(std::string_view token) noexcept {
    const auto* bytes = reinterpret_cast<const unsigned char*>(token.data());
    const std::size_t n = token.size();
    std::uint64_t h = 0x243F6A8885A308D3ULL ^ (static_cast<std::uint64_t>(n) * 0x9E3779B97F4A7C15ULL);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        h = mix64(h ^ load_le(bytes + i, 8));
    }
    if (i < n) {
        h = mix64(h ^ load_le(bytes + i, n - i) ^ (std::uint64_t{0xA5} << 56));
    }
    return mix64(h ^ n);
}

std::size_t HashFamily::bucket_of_fingerprint(std::size_t row, std::uint64_t fp) const noexcept {
    const auto& c = coefficients_[row];
    const std::uint64_t x = (fp & kP) + (fp >> 61); // < 2^61 + 8
    const uint128 ax = static_cast<uint128>(c.a) * x + c.b;
    return static_cast<std::size_t>(reduce_mersenne(ax) % width_);
}

std::size_t HashFamily::bucket(std::size_t row, std::string_view token) const {
    if (row >= coefficients_.size()) {
        throw std::out_of_range("hash row " + std::to_string(row) + " out of range for depth " +
                                std::to_string(coefficients_.size()));
    }
    return bucket_of_fingerprint(row, fingerprint(token));
}

} // namespace confsketch
