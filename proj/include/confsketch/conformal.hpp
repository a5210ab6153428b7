#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "confsketch/pipeline.hpp"
#include "confsketch/random.hpp"
#include "confsketch/sketch.hpp"

namespace confsketch {

enum class ScoreKind : std::uint8_t {
    fixed = 0,       ///< lower bound f_up - t
    adaptive = 1,    ///< lower bound f_up - q_t(f_up), t a grid index
    upper_fixed = 2, ///< upper bound min(t, f_up), for two-sided intervals
};

std::string_view to_string(ScoreKind kind) noexcept;
ScoreKind parse_score_kind(std::string_view name);

struct ConformityScore {
    std::uint64_t value = 0;
    std::uint64_t y = 0;

    friend bool operator==(const ConformityScore&, const ConformityScore&) = default;
};

/// f_up - y: the smallest shift t whose lower bound max(0, f_up - t) reaches y.
/// Throws InvariantError when y > f_up.
ConformityScore score_fixed(const SupervisedPair& pair);

/// y: the smallest t whose upper bound min(t, f_up) reaches y.
ConformityScore score_upper(const SupervisedPair& pair);

/// Binned conditional quantiles of the sketch error f_up - y given f_up.
///
/// Grid index t runs over [0, T). Index 0 is the zero quantile and index T-1
/// is pinned at m, so every label is captured by the last index. Quantiles
/// are non-decreasing in t within a bin and non-decreasing in f_up across bins.
class AdaptiveModel {
public:
    /// `cuts` are the sorted f_up values where bins 1..B-1 start; `table` is
    /// bins x grid_size, row-major.
    AdaptiveModel(std::vector<std::uint64_t> cuts, std::vector<std::uint64_t> table, std::size_t grid_size,
                  std::uint64_t m);

    std::size_t grid_size() const noexcept { return grid_size_; }
    std::size_t bins() const noexcept { return cuts_.size() + 1; }
    std::uint64_t m() const noexcept { return m_; }
    std::span<const std::uint64_t> cuts() const noexcept { return cuts_; }
    std::span<const std::uint64_t> table() const noexcept { return table_; }

    /// Quantile level of grid index t: t / (T - 1).
    double level(std::size_t t) const noexcept;
    std::size_t bin_of(std::uint64_t f_up) const noexcept;
    std::uint64_t quantile(std::size_t t, std::uint64_t f_up) const;
    /// max(0, f_up - q_t(f_up)).
    std::uint64_t lower(std::uint64_t f_up, std::size_t t) const;

    friend bool operator==(const AdaptiveModel&, const AdaptiveModel&) = default;

private:
    std::vector<std::uint64_t> cuts_;
    std::vector<std::uint64_t> table_;
    std::size_t grid_size_;
    std::uint64_t m_;
};

/// Fits on training pairs: f_up split into up to `fup_bins` empirical-quantile
/// bins, lower empirical quantiles of the error per bin at levels t/(T-1),
/// then weighted pool-adjacent-violators across bins for each level (rounded
/// up to integers). Throws ConfigError on an empty training set or T < 2.
AdaptiveModel fit_adaptive(std::span<const SupervisedPair> train, std::size_t grid_size, std::size_t fup_bins,
                           std::uint64_t m);

/// Smallest grid index t with y >= max(0, f_up - q_t(f_up)).
ConformityScore score_adaptive(const AdaptiveModel& model, const SupervisedPair& pair);

/// Order-statistic threshold. An empty `threshold` is the unbounded sentinel:
/// the lower bound collapses to 0 (upper-family: to f_up).
struct CalibrationQuantile {
    std::optional<std::uint64_t> threshold;
    std::size_t n_effective = 0;
    double alpha = 0.0;
    ScoreKind kind = ScoreKind::fixed;

    bool unbounded() const noexcept { return !threshold.has_value(); }
    friend bool operator==(const CalibrationQuantile&, const CalibrationQuantile&) = default;
};

/// ceil((1 - alpha)(n + 1)), or nullopt when it exceeds n.
std::optional<std::size_t> order_statistic_rank(std::size_t n, double alpha);

/// Throws CalibrationError on empty scores, ConfigError for alpha outside (0, 1).
CalibrationQuantile calibrate_marginal(std::span<const std::uint64_t> scores, double alpha,
                                       ScoreKind kind = ScoreKind::fixed);

struct FrequencyBin {
    std::uint64_t lo = 0; ///< inclusive
    std::uint64_t hi = 0; ///< inclusive

    friend bool operator==(const FrequencyBin&, const FrequencyBin&) = default;
};

/// Contiguous, disjoint bins covering {0, ..., m}.
class FrequencyPartition {
public:
    /// Validates sortedness, contiguity and coverage starting at 0.
    explicit FrequencyPartition(std::vector<FrequencyBin> bins, std::size_t requested = 0);

    std::size_t size() const noexcept { return bins_.size(); }
    std::size_t requested() const noexcept { return requested_; }
    std::span<const FrequencyBin> bins() const noexcept { return bins_; }
    const FrequencyBin& operator[](std::size_t l) const { return bins_.at(l); }
    /// Values past the last bin map to the last bin.
    std::size_t bin_of(std::uint64_t value) const noexcept;

    friend bool operator==(const FrequencyPartition&, const FrequencyPartition&) = default;

private:
    std::vector<FrequencyBin> bins_;
    std::size_t requested_;
};

/// Bins start at the empirical l/L quantiles of `y`. Cuts at or below the
/// minimum and duplicate cuts are dropped, so fewer than L bins may result.
FrequencyPartition make_partition(std::span<const std::uint64_t> y, std::size_t bins, std::uint64_t m);

/// Per-bin thresholds; bins holding too few scores give the sentinel.
std::vector<CalibrationQuantile> calibrate_per_bin(std::span<const ConformityScore> scores,
                                                   const FrequencyPartition& partition, double alpha,
                                                   ScoreKind kind = ScoreKind::fixed);

/// Maximum of the per-bin thresholds (sentinel dominates).
CalibrationQuantile calibrate_conditional(std::span<const ConformityScore> scores,
                                          const FrequencyPartition& partition, double alpha,
                                          ScoreKind kind = ScoreKind::fixed);

/// Splits calibration items into G = floor(n0 / m_prime) random groups of
/// size m_prime (leftovers dropped), takes the score of one uniformly chosen
/// distinct token per group, and thresholds those G scores.
CalibrationQuantile calibrate_unique(std::span<const SupervisedPair> calib, std::span<const std::uint64_t> scores,
                                     std::size_t m_prime, double alpha, Rng& rng,
                                     ScoreKind kind = ScoreKind::fixed);

struct ConfidenceInterval {
    std::uint64_t lower = 0;
    std::uint64_t upper = 0;

    std::uint64_t width() const noexcept { return upper - lower; }
    bool contains(std::uint64_t f) const noexcept { return lower <= f && f <= upper; }
    friend bool operator==(const ConfidenceInterval&, const ConfidenceInterval&) = default;
};

/// One-sided interval [f_wu + L(Q), f_wu + f_up]. `model` is required for
/// adaptive quantiles; a kind mismatch throws ConfigError.
ConfidenceInterval predict_lower(std::string_view token, const CountMinSketch& sketch,
                                 const WarmupDictionary& warmup, const CalibrationQuantile& quantile,
                                 ScoreKind kind, const AdaptiveModel* model = nullptr);

/// Exact interval for tracked warm-up tokens, the regular one otherwise.
ConfidenceInterval predict_lower_exact_tracked(std::string_view token, const CountMinSketch& sketch,
                                               const WarmupDictionary& warmup, const TrackedCounts& tracked,
                                               const CalibrationQuantile& quantile, ScoreKind kind,
                                               const AdaptiveModel* model = nullptr);

struct TwoSidedCalibration {
    CalibrationQuantile lower; ///< fixed lower family at alpha/2
    CalibrationQuantile upper; ///< upper family at alpha/2
};

TwoSidedCalibration calibrate_two_sided(std::span<const std::uint64_t> lower_scores,
                                        std::span<const std::uint64_t> upper_scores, double alpha);

/// [f_wu + max(0, f_up - Q_l), f_wu + min(Q_u, f_up)], lower clamped to upper.
ConfidenceInterval two_sided_bonferroni(std::string_view token, const CountMinSketch& sketch,
                                        const WarmupDictionary& warmup, const TwoSidedCalibration& calibration);

ConfidenceInterval two_sided_bonferroni(std::string_view token, const CountMinSketch& sketch,
                                        const WarmupDictionary& warmup, std::span<const std::uint64_t> lower_scores,
                                        std::span<const std::uint64_t> upper_scores, double alpha);

enum class Regime : std::uint8_t { marginal, conditional, unique };

std::string_view to_string(Regime regime) noexcept;
Regime parse_regime(std::string_view name);

struct RegimeConfig {
    Regime regime = Regime::marginal;
    std::size_t bins = 5;    ///< L, conditional regime
    std::size_t m_prime = 1; ///< M', unique regime
};

struct Calibration {
    CalibrationQuantile quantile;
    std::optional<FrequencyPartition> partition; ///< conditional regime only
};

/// Dispatches to the regime's calibrate_* operation. `rng` is consumed only by
/// the unique regime.
Calibration calibrate(const RegimeConfig& config, std::span<const SupervisedPair> calib,
                      std::span<const ConformityScore> scores, double alpha, std::uint64_t m, ScoreKind kind,
                      Rng& rng);

/// Binary sidecars: "CALQ" / "ADPM" magic, u32 version, little-endian fields.
void write_calibration(std::ostream& out, const CalibrationQuantile& quantile);
CalibrationQuantile read_calibration(std::istream& in);
void write_adaptive_model(std::ostream& out, const AdaptiveModel& model);
AdaptiveModel read_adaptive_model(std::istream& in);

} // namespace confsketch
