#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "confsketch/random.hpp"
#include "confsketch/sketch.hpp"

namespace confsketch {

struct TokenHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

using FrequencyMap = std::unordered_map<std::string, std::uint64_t, TokenHash, std::equal_to<>>;

/// Exact counts of the first m0 stream items.
struct WarmupDictionary {
    FrequencyMap counts;
    std::vector<std::string> first_seen; ///< distinct tokens in order of first appearance
    std::uint64_t m0 = 0;

    std::uint64_t count(std::string_view token) const;
    std::size_t distinct() const noexcept { return counts.size(); }
};

/// Post-warm-up occurrences of warm-up tokens. Keys are exactly the warm-up
/// tokens; anything else is implicitly 0.
struct TrackedCounts {
    FrequencyMap counts;

    std::uint64_t count(std::string_view token) const;
};

/// One supervised observation: a warm-up token, its frequency y among the
/// sketched items, and the sketch's upper bound for it. y <= f_up always.
struct SupervisedPair {
    std::string token;
    std::uint64_t y = 0;
    std::uint64_t f_up = 0;

    friend bool operator==(const SupervisedPair&, const SupervisedPair&) = default;
};

struct SketchConfig {
    SketchKind kind = SketchKind::cms_cu;
    std::size_t depth = 3;
    std::size_t width = 200;
    std::uint64_t seed = 0;
};

struct PipelineResult {
    WarmupDictionary warmup;
    TrackedCounts tracked;
    CountMinSketch sketch;
};

/// Streaming form of the warm-up-then-sketch protocol: the first m0 pushed
/// tokens are counted exactly, later ones go into the sketch and, if they
/// were seen during warm-up, into the tracked counts.
class WarmupSketcher {
public:
    /// Throws ConfigError for m0 == 0.
    WarmupSketcher(std::uint64_t m0, const SketchConfig& config);

    void push(std::string_view token);
    std::uint64_t pushed() const noexcept { return pushed_; }

    /// Freezes the sketch. Throws ConfigError unless more than m0 tokens were pushed.
    PipelineResult finish() &&;

private:
    WarmupDictionary warmup_;
    TrackedCounts tracked_;
    CountMinSketch sketch_;
    std::uint64_t pushed_ = 0;
};

/// Requires 0 < m0 < stream.size().
PipelineResult run_pipeline(std::span<const std::string> stream, std::uint64_t m0, const SketchConfig& config);

enum class PairIndexing {
    per_observation, ///< one pair per warm-up item (m0 pairs)
    distinct,        ///< one pair per distinct warm-up token; diagnostics only
};

/// Pairs follow the warm-up dictionary's first-seen order; a token seen k
/// times during warm-up contributes k identical consecutive pairs.
std::vector<SupervisedPair> build_supervised(const WarmupDictionary& warmup, const TrackedCounts& tracked,
                                             const CountMinSketch& sketch,
                                             PairIndexing indexing = PairIndexing::per_observation);

struct TrainCalibSplit {
    std::vector<SupervisedPair> train;
    std::vector<SupervisedPair> calib;
};

/// Uniformly random partition with |train| = m0_train.
TrainCalibSplit split_train_calib(std::span<const SupervisedPair> pairs, std::size_t m0_train, Rng& rng);

/// `token<TAB>f_wu<TAB>f_sv` per warm-up token, first-seen order. Tab,
/// newline, carriage return and backslash in tokens are backslash-escaped.
void write_tracked_tsv(std::ostream& out, const WarmupDictionary& warmup, const TrackedCounts& tracked);
std::pair<WarmupDictionary, TrackedCounts> read_tracked_tsv(std::istream& in);

/// Newline-delimited tokens; a trailing '\r' is stripped, empty lines kept as empty tokens
/// except for a final empty line at end of input.
std::vector<std::string> read_token_lines(std::istream& in);

} // namespace confsketch
