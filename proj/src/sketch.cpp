#include "confsketch/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "binary_io.hpp"
#include "confsketch/errors.hpp"

namespace confsketch {
namespace {

constexpr std::string_view kSnapshotMagic = "CMSK";
constexpr std::uint32_t kSnapshotVersion = 1;
// Bound on d*w accepted from a snapshot header.
constexpr std::uint64_t kMaxSnapshotCells = std::uint64_t{1} << 32;

void increment(std::uint64_t& c) {
    if (c == std::numeric_limits<std::uint64_t>::max()) {
        throw InvariantError("sketch counter overflow");
    }
    ++c;
}

} // namespace

std::string_view to_string(SketchKind kind) noexcept {
    return kind == SketchKind::cms ? "cms" : "cmscu";
}

SketchKind parse_sketch_kind(std::string_view name) {
    if (name == "cms") {
        return SketchKind::cms;
    }
    if (name == "cmscu" || name == "cms-cu" || name == "cms_cu") {
        return SketchKind::cms_cu;
    }
    throw ConfigError("unknown sketch kind '" + std::string(name) + "'");
}

ClassicalBoundParams classical_bound_params(std::size_t depth, std::size_t width) noexcept {
    return {std::exp(-static_cast<double>(depth)), std::numbers::e / static_cast<double>(width)};
}

CountMinSketch::CountMinSketch(SketchKind kind, HashFamily family)
    : kind_(kind), family_(std::move(family)), counters_(family_.depth() * family_.width(), 0) {}

CountMinSketch::CountMinSketch(SketchKind kind, std::uint64_t seed, std::size_t depth, std::size_t width)
    : CountMinSketch(kind, HashFamily(seed, depth, width)) {}

std::span<const std::uint64_t> CountMinSketch::row(std::size_t j) const {
    if (j >= depth()) {
        throw std::out_of_range("sketch row " + std::to_string(j) + " out of range");
    }
    return std::span<const std::uint64_t>(counters_).subspan(j * width(), width());
}

void CountMinSketch::update(std::string_view token) {
    if (frozen_) {
        throw InvariantError("update on a frozen sketch");
    }
    const std::size_t d = depth();
    const std::size_t w = width();
    const std::uint64_t fp = HashFamily::fingerprint(token);
    if (kind_ == SketchKind::cms) {
        for (std::size_t j = 0; j < d; ++j) {
            increment(counters_[j * w + family_.bucket_of_fingerprint(j, fp)]);
        }
    } else {
        // All addressed counters tied at the minimum move together.
        std::uint64_t smallest = std::numeric_limits<std::uint64_t>::max();
        for (std::size_t j = 0; j < d; ++j) {
            smallest = std::min(smallest, counters_[j * w + family_.bucket_of_fingerprint(j, fp)]);
        }
        for (std::size_t j = 0; j < d; ++j) {
            auto& c = counters_[j * w + family_.bucket_of_fingerprint(j, fp)];
            if (c == smallest) {
                increment(c);
            }
        }
    }
    ++items_seen_;
}

std::uint64_t CountMinSketch::upper_bound(std::string_view token) const {
    const std::size_t w = width();
    const std::uint64_t fp = HashFamily::fingerprint(token);
    std::uint64_t smallest = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t j = 0; j < depth(); ++j) {
        smallest = std::min(smallest, counters_[j * w + family_.bucket_of_fingerprint(j, fp)]);
    }
    return smallest;
}

ClassicalBound CountMinSketch::classical_lower_bound(std::string_view token) const {
    if (kind_ != SketchKind::cms) {
        throw UnsupportedKindError("classical lower bound holds only for the vanilla CMS");
    }
    if (items_seen_ == 0) {
        throw InvariantError("classical lower bound needs a non-empty sketch");
    }
    const auto params = classical_bound_params(depth(), width());
    const double raw = static_cast<double>(upper_bound(token)) -
                       params.epsilon * static_cast<double>(items_seen_);
    const double lower = raw <= 0.0 ? 0.0 : std::ceil(raw);
    return {static_cast<std::uint64_t>(lower), 1.0 - params.delta};
}

void write_snapshot(std::ostream& out, const CountMinSketch& sketch) {
    using namespace detail;
    write_magic(out, kSnapshotMagic, kSnapshotVersion);
    write_u8(out, static_cast<std::uint8_t>(sketch.kind()));
    write_u8(out, 0);
    write_u8(out, 0);
    write_u8(out, 0);
    write_u32(out, static_cast<std::uint32_t>(sketch.depth()));
    write_u32(out, static_cast<std::uint32_t>(sketch.width()));
    write_u64(out, sketch.family().seed());
    write_u64(out, sketch.items_seen());
    for (const auto c : sketch.counters()) {
        write_u64(out, c);
    }
    if (!out) {
        throw FormatError("failed writing sketch snapshot");
    }
}

CountMinSketch read_snapshot(std::istream& in) {
    using namespace detail;
    expect_magic(in, kSnapshotMagic, kSnapshotVersion);
    const auto kind_byte = read_u8(in);
    if (kind_byte > 1) {
        throw FormatError("unknown sketch kind byte " + std::to_string(kind_byte));
    }
    read_u8(in);
    read_u8(in);
    read_u8(in);
    const std::uint32_t d = read_u32(in);
    const std::uint32_t w = read_u32(in);
    const std::uint64_t seed = read_u64(in);
    const std::uint64_t m = read_u64(in);
    if (d == 0 || w < 2 || static_cast<std::uint64_t>(d) * w > kMaxSnapshotCells) {
        throw FormatError("invalid sketch dimensions in snapshot");
    }
    CountMinSketch sketch(static_cast<SketchKind>(kind_byte), seed, d, w);
    for (auto& c : sketch.counters_) {
        c = read_u64(in);
    }
    sketch.items_seen_ = m;
    sketch.freeze();
    return sketch;
}

} // namespace confsketch
