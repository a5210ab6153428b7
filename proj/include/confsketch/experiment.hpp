#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confsketch/conformal.hpp"
#include "confsketch/pipeline.hpp"

namespace confsketch {

enum class Family : std::uint8_t { zipf, pitman_yor };

std::string_view to_string(Family family) noexcept;
Family parse_family(std::string_view name);

struct ExperimentConfig {
    Family family = Family::zipf;
    double zipf_a = 1.5;
    double pyp_lambda = 5000.0;
    double pyp_sigma = 0.5;

    std::uint64_t m = 20000;  ///< stream length, warm-up included
    std::uint64_t m0 = 2000;  ///< warm-up length
    std::optional<std::uint64_t> m0_train; ///< default: 0 for fixed scores, m0/2 for adaptive

    SketchKind kind = SketchKind::cms_cu;
    std::size_t depth = 3;
    std::size_t width = 200;
    std::uint64_t seed = 0;

    ScoreKind score = ScoreKind::fixed;
    std::size_t grid_size = 100; ///< T, adaptive scores
    std::size_t fup_bins = 20;   ///< f_up bins of the adaptive model

    RegimeConfig regime;
    double alpha = 0.05;
    std::size_t queries = 2000;
    std::size_t test_size = 100; ///< M, test multiset size for unique coverage
    double pi = 0.0;             ///< shift proportion
    bool exact_tracked = false;  ///< answer warm-up tokens with their exact count
    std::size_t repetitions = 10;
    std::size_t threads = 0; ///< 0: hardware concurrency

    std::uint64_t train_size() const noexcept;
    /// Throws ConfigError on violated invariants.
    void validate() const;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

struct CoverageLength {
    double coverage = 0.0;
    double mean_length = 0.0;
    std::size_t n = 0;

    friend bool operator==(const CoverageLength&, const CoverageLength&) = default;
};

/// Fraction of truths inside their interval and mean width. Throws
/// ConfigError on a length mismatch or empty input.
CoverageLength coverage_and_length(std::span<const ConfidenceInterval> intervals,
                                   std::span<const std::uint64_t> truths);

struct BinMetrics {
    std::size_t bin_id = 0;
    FrequencyBin bin;
    std::optional<CoverageLength> metrics; ///< empty for bins without queries
};

/// Routes each query to the bin of its key and scores each bin. `keys`
/// defaults to the truths themselves when empty.
std::vector<BinMetrics> stratified_metrics(std::span<const ConfidenceInterval> intervals,
                                           std::span<const std::uint64_t> truths,
                                           const FrequencyPartition& partition,
                                           std::span<const std::uint64_t> keys = {});

/// Coverage and length over the distinct tokens of a test multiset, each
/// distinct token counted once (first occurrence).
CoverageLength unique_metrics(std::span<const std::string> tokens, std::span<const ConfidenceInterval> intervals,
                              std::span<const std::uint64_t> truths);

struct MetricsRow {
    std::size_t rep = 0;
    Regime regime = Regime::marginal;
    double alpha = 0.0;
    double pi = 0.0;
    std::optional<double> coverage;
    std::optional<double> mean_length;
    std::optional<std::size_t> bin_id;
    std::optional<FrequencyBin> bin;
    std::optional<double> unique_coverage;

    // Not part of the CSV.
    std::size_t queries = 0;
    std::optional<std::uint64_t> threshold;
    bool sentinel = false;
    std::string diagnostic; ///< non-empty for warning and error rows

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// One summary row per repetition (bin_id empty), followed by one row per
/// partition bin in the conditional regime. A failing repetition yields a
/// single row with blank metrics and the error text as diagnostic.
std::vector<MetricsRow> run_experiment(const ExperimentConfig& config);

/// Runs one repetition; used by run_experiment and by tests.
std::vector<MetricsRow> run_repetition(const ExperimentConfig& config, std::size_t rep);

inline constexpr std::string_view kMetricsCsvHeader =
    "rep,regime,alpha,coverage,mean_length,bin_id,bin_lo,bin_hi,unique_coverage,pi";
/// Version of the CSV layout above.
inline constexpr int kMetricsCsvVersion = 1;

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

} // namespace confsketch
