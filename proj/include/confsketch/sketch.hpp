#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "confsketch/hash_family.hpp"

namespace confsketch {

enum class SketchKind : std::uint8_t {
    cms = 0,    ///< every addressed counter incremented
    cms_cu = 1, ///< conservative update: only the minimal addressed counters
};

std::string_view to_string(SketchKind kind) noexcept;
/// Accepts "cms" and "cmscu" (also "cms-cu", "cms_cu").
SketchKind parse_sketch_kind(std::string_view name);

/// delta = e^-d, epsilon = e / w for the textbook count-min guarantee.
struct ClassicalBoundParams {
    double delta;
    double epsilon;
};

ClassicalBoundParams classical_bound_params(std::size_t depth, std::size_t width) noexcept;

struct ClassicalBound {
    std::uint64_t lower;
    double confidence; ///< 1 - e^-d
};

/// A d x w grid of 64-bit counters summarizing a token stream.
///
/// upper_bound() never underestimates the number of times a token was
/// inserted, for either kind. The sketch is single-writer; freeze() ends
/// ingestion, after which concurrent queries are safe.
class CountMinSketch {
public:
    CountMinSketch(SketchKind kind, HashFamily family);
    CountMinSketch(SketchKind kind, std::uint64_t seed, std::size_t depth, std::size_t width);

    void update(std::string_view token);
    std::uint64_t upper_bound(std::string_view token) const;

    /// max(0, ceil(upper_bound - (e/w) * m)); vanilla CMS only.
    ClassicalBound classical_lower_bound(std::string_view token) const;

    void freeze() noexcept { frozen_ = true; }
    bool frozen() const noexcept { return frozen_; }

    SketchKind kind() const noexcept { return kind_; }
    const HashFamily& family() const noexcept { return family_; }
    std::size_t depth() const noexcept { return family_.depth(); }
    std::size_t width() const noexcept { return family_.width(); }
    std::uint64_t items_seen() const noexcept { return items_seen_; }

    /// Row-major counters, depth() * width() entries.
    std::span<const std::uint64_t> counters() const noexcept { return counters_; }
    std::span<const std::uint64_t> row(std::size_t j) const;
    std::uint64_t counter(std::size_t j, std::size_t k) const { return row(j)[k]; }

    friend bool operator==(const CountMinSketch&, const CountMinSketch&) = default;

private:
    friend CountMinSketch read_snapshot(std::istream& in);

    SketchKind kind_;
    HashFamily family_;
    std::vector<std::uint64_t> counters_;
    std::uint64_t items_seen_ = 0;
    bool frozen_ = false;
};

/// Binary snapshot: "CMSK", u32 version, u8 kind, 3 reserved bytes,
/// u32 d, u32 w, u64 seed, u64 m_sketched, then d*w u64 counters row-major.
/// All integers little-endian.
void write_snapshot(std::ostream& out, const CountMinSketch& sketch);
/// The loaded sketch is frozen.
CountMinSketch read_snapshot(std::istream& in);

} // namespace confsketch
