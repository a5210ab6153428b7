#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace confsketch {

/// Row hashes h_j(x) = ((a_j * x + b_j) mod p) mod w over p = 2^61 - 1.
///
/// Tokens are byte strings. They are first folded to a 64-bit fingerprint by a
/// fixed, seed-independent mix; only the affine step depends on the seed, so the
/// family is pairwise independent over fingerprints (not over raw bytes).
/// Immutable after construction.
class HashFamily {
public:
    static constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

    struct Coefficients {
        std::uint64_t a; // in [1, p)
        std::uint64_t b; // in [0, p)
        friend bool operator==(const Coefficients&, const Coefficients&) = default;
    };

    /// Throws ConfigError when depth == 0 or width < 2.
    HashFamily(std::uint64_t seed, std::size_t depth, std::size_t width);

    std::size_t depth() const noexcept { return coefficients_.size(); }
    std::size_t width() const noexcept { return width_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::span<const Coefficients> coefficients() const noexcept { return coefficients_; }

    /// Bucket of `token` in `row`; throws std::out_of_range for row >= depth().
    std::size_t bucket(std::size_t row, std::string_view token) const;

    /// Unchecked bucket lookup for a precomputed fingerprint.
    std::size_t bucket_of_fingerprint(std::size_t row, std::uint64_t fingerprint) const noexcept;

    static std::uint64_t fingerprint(std::string_view token) noexcept;

    friend bool operator==(const HashFamily&, const HashFamily&) = default;

private:
    std::uint64_t seed_;
    std::size_t width_;
    std::vector<Coefficients> coefficients_;
};

} // namespace confsketch
