#include "confsketch/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>

#include "binary_io.hpp"
#include "confsketch/errors.hpp"

namespace confsketch {
namespace {

constexpr std::string_view kCalibrationMagic = "CALQ";
constexpr std::string_view kModelMagic = "ADPM";
constexpr std::uint32_t kSidecarVersion = 1;

// Absorbs representation error in products like 0.95 * 100.
constexpr double kRankSlack = 1e-9;

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
}

std::uint64_t ceil_slack(double x) {
    return x <= 0.0 ? 0 : static_cast<std::uint64_t>(std::ceil(x - kRankSlack));
}

// Positions where bins 1.. start: values at sorted[floor(l n / L)], strictly
// above the minimum, deduplicated.
std::vector<std::uint64_t> quantile_cuts(std::vector<std::uint64_t> sorted_values, std::size_t bins) {
    std::vector<std::uint64_t> cuts;
    if (sorted_values.empty() || bins <= 1) {
        return cuts;
    }
    std::sort(sorted_values.begin(), sorted_values.end());
    const std::size_t n = sorted_values.size();
    const std::uint64_t lowest = sorted_values.front();
    for (std::size_t l = 1; l < bins; ++l) {
        const auto v = sorted_values[l * n / bins];
        if (v > lowest && (cuts.empty() || v > cuts.back())) {
            cuts.push_back(v);
        }
    }
    return cuts;
}

// Weighted pool-adjacent-violators for a non-decreasing fit.
std::vector<double> isotonic(std::span<const double> values, std::span<const double> weights) {
    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < values.size(); ++i) {
        blocks.push_back({values[i], weights[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            const Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            const double w = prev.weight + top.weight;
            prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
            prev.weight = w;
            prev.count += top.count;
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& b : blocks) {
        out.insert(out.end(), b.count, b.mean);
    }
    return out;
}

CalibrationQuantile threshold_of(std::vector<std::uint64_t> scores, double alpha, ScoreKind kind) {
    CalibrationQuantile q;
    q.n_effective = scores.size();
    q.alpha = alpha;
    q.kind = kind;
    if (const auto rank = order_statistic_rank(scores.size(), alpha)) {
        const auto nth = scores.begin() + static_cast<std::ptrdiff_t>(*rank - 1);
        std::nth_element(scores.begin(), nth, scores.end());
        q.threshold = *nth;
    }
    return q;
}

void check_kind(const CalibrationQuantile& quantile, ScoreKind kind) {
    if (quantile.kind != kind) {
        throw ConfigError("calibration was computed for " + std::string(to_string(quantile.kind)) +
                          " scores but " + std::string(to_string(kind)) + " was requested");
    }
}

} // namespace

std::string_view to_string(ScoreKind kind) noexcept {
    switch (kind) {
    case ScoreKind::fixed: return "fixed";
    case ScoreKind::adaptive: return "adaptive";
    case ScoreKind::upper_fixed: return "upper";
    }
    return "?";
}

ScoreKind parse_score_kind(std::string_view name) {
    if (name == "fixed") {
        return ScoreKind::fixed;
    }
    if (name == "adaptive") {
        return ScoreKind::adaptive;
    }
    if (name == "upper") {
        return ScoreKind::upper_fixed;
    }
    throw ConfigError("unknown score kind '" + std::string(name) + "'");
}

std::string_view to_string(Regime regime) noexcept {
    switch (regime) {
    case Regime::marginal: return "marginal";
    case Regime::conditional: return "conditional";
    case Regime::unique: return "unique";
    }
    return "?";
}

Regime parse_regime(std::string_view name) {
    if (name == "marginal") {
        return Regime::marginal;
    }
    if (name == "conditional") {
        return Regime::conditional;
    }
    if (name == "unique") {
        return Regime::unique;
    }
    throw ConfigError("unknown regime '" + std::string(name) + "'");
}

ConformityScore score_fixed(const SupervisedPair& pair) {
    if (pair.y > pair.f_up) {
        throw InvariantError("label " + std::to_string(pair.y) + " exceeds upper bound " +
                             std::to_string(pair.f_up) + " for '" + pair.token + "'");
    }
    return {pair.f_up - pair.y, pair.y};
}

ConformityScore score_upper(const SupervisedPair& pair) {
    if (pair.y > pair.f_up) {
        throw InvariantError("label exceeds upper bound for '" + pair.token + "'");
    }
    return {pair.y, pair.y};
}

// ---------------------------------------------------------------------------
// Adaptive model

AdaptiveModel::AdaptiveModel(std::vector<std::uint64_t> cuts, std::vector<std::uint64_t> table,
                             std::size_t grid_size, std::uint64_t m)
    : cuts_(std::move(cuts)), table_(std::move(table)), grid_size_(grid_size), m_(m) {
    if (grid_size_ < 2) {
        throw ConfigError("adaptive grid needs at least 2 levels");
    }
    if (!std::is_sorted(cuts_.begin(), cuts_.end()) ||
        std::adjacent_find(cuts_.begin(), cuts_.end()) != cuts_.end()) {
        throw ConfigError("adaptive bin cuts must be strictly increasing");
    }
    if (table_.size() != bins() * grid_size_) {
        throw ConfigError("adaptive quantile table has the wrong shape");
    }
    for (std::size_t b = 0; b < bins(); ++b) {
        const auto row = std::span<const std::uint64_t>(table_).subspan(b * grid_size_, grid_size_);
        if (row.front() != 0 || row.back() != m_ || !std::is_sorted(row.begin(), row.end())) {
            throw InvariantError("adaptive quantiles must rise from 0 to m within each bin");
        }
    }
}

double AdaptiveModel::level(std::size_t t) const noexcept {
    return static_cast<double>(t) / static_cast<double>(grid_size_ - 1);
}

std::size_t AdaptiveModel::bin_of(std::uint64_t f_up) const noexcept {
    return static_cast<std::size_t>(std::upper_bound(cuts_.begin(), cuts_.end(), f_up) - cuts_.begin());
}

std::uint64_t AdaptiveModel::quantile(std::size_t t, std::uint64_t f_up) const {
    if (t >= grid_size_) {
        throw std::out_of_range("adaptive grid index " + std::to_string(t) + " out of range");
    }
    return table_[bin_of(f_up) * grid_size_ + t];
}

std::uint64_t AdaptiveModel::lower(std::uint64_t f_up, std::size_t t) const {
    const auto q = quantile(t, f_up);
    return q >= f_up ? 0 : f_up - q;
}

AdaptiveModel fit_adaptive(std::span<const SupervisedPair> train, std::size_t grid_size, std::size_t fup_bins,
                           std::uint64_t m) {
    if (train.empty()) {
        throw ConfigError("adaptive scores need at least one training pair; use fixed scores instead");
    }
    if (grid_size < 2) {
        throw ConfigError("adaptive grid needs at least 2 levels");
    }
    if (fup_bins == 0) {
        throw ConfigError("adaptive model needs at least one f_up bin");
    }
    std::vector<std::uint64_t> f_ups;
    f_ups.reserve(train.size());
    for (const auto& p : train) {
        if (p.y > p.f_up) {
            throw InvariantError("label exceeds upper bound in adaptive training data");
        }
        f_ups.push_back(p.f_up);
    }
    auto cuts = quantile_cuts(f_ups, fup_bins);
    const std::size_t bins = cuts.size() + 1;

    std::vector<std::vector<std::uint64_t>> errors(bins);
    for (const auto& p : train) {
        const auto b = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), p.f_up) - cuts.begin());
        errors[b].push_back(p.f_up - p.y);
    }
    for (auto& e : errors) {
        std::sort(e.begin(), e.end());
    }

    // Interior levels only; endpoints are pinned to 0 and m.
    std::vector<std::uint64_t> table(bins * grid_size, 0);
    std::vector<double> column(bins);
    std::vector<double> weights(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        weights[b] = static_cast<double>(errors[b].size());
    }
    for (std::size_t t = 1; t + 1 < grid_size; ++t) {
        const double level = static_cast<double>(t) / static_cast<double>(grid_size - 1);
        for (std::size_t b = 0; b < bins; ++b) {
            const auto& e = errors[b];
            const auto rank = std::max<std::uint64_t>(1, ceil_slack(level * static_cast<double>(e.size())));
            column[b] = static_cast<double>(e[std::min<std::size_t>(rank, e.size()) - 1]);
        }
        const auto pooled = isotonic(column, weights);
        for (std::size_t b = 0; b < bins; ++b) {
            table[b * grid_size + t] = std::min<std::uint64_t>(m, ceil_slack(pooled[b]));
        }
    }
    for (std::size_t b = 0; b < bins; ++b) {
        table[b * grid_size + grid_size - 1] = m;
    }
    return AdaptiveModel(std::move(cuts), std::move(table), grid_size, m);
}

ConformityScore score_adaptive(const AdaptiveModel& model, const SupervisedPair& pair) {
    if (pair.y > pair.f_up) {
        throw InvariantError("label exceeds upper bound for '" + pair.token + "'");
    }
    const auto row = model.table().subspan(model.bin_of(pair.f_up) * model.grid_size(), model.grid_size());
    const auto it = std::lower_bound(row.begin(), row.end(), pair.f_up - pair.y);
    if (it == row.end()) {
        throw InvariantError("upper bound exceeds the adaptive model's m");
    }
    return {static_cast<std::uint64_t>(it - row.begin()), pair.y};
}

// ---------------------------------------------------------------------------
// Thresholds

std::optional<std::size_t> order_statistic_rank(std::size_t n, double alpha) {
    check_alpha(alpha);
    const auto rank = ceil_slack((1.0 - alpha) * static_cast<double>(n + 1));
    if (rank > n) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(std::max<std::uint64_t>(rank, 1));
}

CalibrationQuantile calibrate_marginal(std::span<const std::uint64_t> scores, double alpha, ScoreKind kind) {
    check_alpha(alpha);
    if (scores.empty()) {
        throw CalibrationError("no calibration scores");
    }
    return threshold_of(std::vector<std::uint64_t>(scores.begin(), scores.end()), alpha, kind);
}

FrequencyPartition::FrequencyPartition(std::vector<FrequencyBin> bins, std::size_t requested)
    : bins_(std::move(bins)), requested_(requested == 0 ? bins_.size() : requested) {
    if (bins_.empty()) {
        throw ConfigError("partition needs at least one bin");
    }
    if (bins_.front().lo != 0) {
        throw ConfigError("partition must start at frequency 0");
    }
    for (std::size_t l = 0; l < bins_.size(); ++l) {
        if (bins_[l].lo > bins_[l].hi) {
            throw ConfigError("partition bin " + std::to_string(l) + " is empty");
        }
        if (l > 0 && bins_[l].lo != bins_[l - 1].hi + 1) {
            throw ConfigError("partition bins must be contiguous");
        }
    }
}

std::size_t FrequencyPartition::bin_of(std::uint64_t value) const noexcept {
    const auto it = std::upper_bound(bins_.begin(), bins_.end(), value,
                                     [](std::uint64_t v, const FrequencyBin& b) { return v < b.lo; });
    return static_cast<std::size_t>(it - bins_.begin()) - 1;
}

FrequencyPartition make_partition(std::span<const std::uint64_t> y, std::size_t bins, std::uint64_t m) {
    if (bins == 0) {
        throw ConfigError("partition needs at least one bin");
    }
    auto cuts = quantile_cuts(std::vector<std::uint64_t>(y.begin(), y.end()), bins);
    std::erase_if(cuts, [m](std::uint64_t c) { return c > m; });
    std::vector<FrequencyBin> out;
    std::uint64_t lo = 0;
    for (const auto c : cuts) {
        out.push_back({lo, c - 1});
        lo = c;
    }
    out.push_back({lo, m});
    return FrequencyPartition(std::move(out), bins);
}

std::vector<CalibrationQuantile> calibrate_per_bin(std::span<const ConformityScore> scores,
                                                   const FrequencyPartition& partition, double alpha,
                                                   ScoreKind kind) {
    check_alpha(alpha);
    std::vector<std::vector<std::uint64_t>> grouped(partition.size());
    for (const auto& s : scores) {
        grouped[partition.bin_of(s.y)].push_back(s.value);
    }
    std::vector<CalibrationQuantile> out;
    out.reserve(grouped.size());
    for (auto& g : grouped) {
        out.push_back(threshold_of(std::move(g), alpha, kind));
    }
    return out;
}

CalibrationQuantile calibrate_conditional(std::span<const ConformityScore> scores,
                                          const FrequencyPartition& partition, double alpha, ScoreKind kind) {
    check_alpha(alpha);
    if (scores.empty()) {
        throw CalibrationError("no calibration scores in any bin");
    }
    CalibrationQuantile result;
    result.n_effective = scores.size();
    result.alpha = alpha;
    result.kind = kind;
    result.threshold = 0;
    for (const auto& q : calibrate_per_bin(scores, partition, alpha, kind)) {
        if (q.unbounded()) {
            result.threshold.reset();
            break;
        }
        result.threshold = std::max(*result.threshold, *q.threshold);
    }
    return result;
}

CalibrationQuantile calibrate_unique(std::span<const SupervisedPair> calib, std::span<const std::uint64_t> scores,
                                     std::size_t m_prime, double alpha, Rng& rng, ScoreKind kind) {
    check_alpha(alpha);
    if (calib.size() != scores.size()) {
        throw ConfigError("calibration items and scores differ in length");
    }
    if (m_prime == 0) {
        throw ConfigError("calibration group size M' must be positive");
    }
    const std::size_t groups = calib.size() / m_prime;
    if (groups == 0) {
        throw CalibrationError("calibration set of " + std::to_string(calib.size()) + " items too small for M'=" +
                               std::to_string(m_prime));
    }
    std::vector<std::size_t> order(calib.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(order.begin(), order.end());

    std::vector<std::uint64_t> representatives;
    representatives.reserve(groups);
    std::vector<std::size_t> distinct;
    std::unordered_set<std::string_view> seen;
    for (std::size_t g = 0; g < groups; ++g) {
        distinct.clear();
        seen.clear();
        for (std::size_t k = g * m_prime; k < (g + 1) * m_prime; ++k) {
            if (seen.insert(calib[order[k]].token).second) {
                distinct.push_back(order[k]);
            }
        }
        representatives.push_back(scores[distinct[rng.uniform_index(distinct.size())]]);
    }
    return threshold_of(std::move(representatives), alpha, kind);
}

// ---------------------------------------------------------------------------
// Intervals

ConfidenceInterval predict_lower(std::string_view token, const CountMinSketch& sketch,
                                 const WarmupDictionary& warmup, const CalibrationQuantile& quantile,
                                 ScoreKind kind, const AdaptiveModel* model) {
    check_kind(quantile, kind);
    const auto f_wu = warmup.count(token);
    const auto f_up = sketch.upper_bound(token);
    std::uint64_t lower = 0;
    switch (kind) {
    case ScoreKind::fixed:
        if (quantile.threshold) {
            lower = *quantile.threshold >= f_up ? 0 : f_up - *quantile.threshold;
        }
        break;
    case ScoreKind::adaptive:
        if (model == nullptr) {
            throw ConfigError("adaptive intervals need a fitted model");
        }
        if (quantile.threshold) {
            const auto t = std::min<std::uint64_t>(*quantile.threshold, model->grid_size() - 1);
            lower = model->lower(f_up, static_cast<std::size_t>(t));
        }
        break;
    case ScoreKind::upper_fixed:
        throw ConfigError("upper-family quantiles produce two-sided intervals; use two_sided_bonferroni");
    }
    return {f_wu + lower, f_wu + f_up};
}

ConfidenceInterval predict_lower_exact_tracked(std::string_view token, const CountMinSketch& sketch,
                                               const WarmupDictionary& warmup, const TrackedCounts& tracked,
                                               const CalibrationQuantile& quantile, ScoreKind kind,
                                               const AdaptiveModel* model) {
    if (const auto f_wu = warmup.count(token); f_wu > 0) {
        const auto exact = f_wu + tracked.count(token);
        return {exact, exact};
    }
    return predict_lower(token, sketch, warmup, quantile, kind, model);
}

TwoSidedCalibration calibrate_two_sided(std::span<const std::uint64_t> lower_scores,
                                        std::span<const std::uint64_t> upper_scores, double alpha) {
    check_alpha(alpha);
    return {calibrate_marginal(lower_scores, alpha / 2, ScoreKind::fixed),
            calibrate_marginal(upper_scores, alpha / 2, ScoreKind::upper_fixed)};
}

ConfidenceInterval two_sided_bonferroni(std::string_view token, const CountMinSketch& sketch,
                                        const WarmupDictionary& warmup, const TwoSidedCalibration& calibration) {
    check_kind(calibration.lower, ScoreKind::fixed);
    check_kind(calibration.upper, ScoreKind::upper_fixed);
    const auto f_wu = warmup.count(token);
    const auto f_up = sketch.upper_bound(token);
    std::uint64_t lower = 0;
    if (calibration.lower.threshold && *calibration.lower.threshold < f_up) {
        lower = f_up - *calibration.lower.threshold;
    }
    std::uint64_t upper = f_up;
    if (calibration.upper.threshold) {
        upper = std::min(*calibration.upper.threshold, f_up);
    }
    lower = std::min(lower, upper);
    return {f_wu + lower, f_wu + upper};
}

ConfidenceInterval two_sided_bonferroni(std::string_view token, const CountMinSketch& sketch,
                                        const WarmupDictionary& warmup, std::span<const std::uint64_t> lower_scores,
                                        std::span<const std::uint64_t> upper_scores, double alpha) {
    return two_sided_bonferroni(token, sketch, warmup, calibrate_two_sided(lower_scores, upper_scores, alpha));
}

Calibration calibrate(const RegimeConfig& config, std::span<const SupervisedPair> calib,
                      std::span<const ConformityScore> scores, double alpha, std::uint64_t m, ScoreKind kind,
                      Rng& rng) {
    if (calib.size() != scores.size()) {
        throw ConfigError("calibration items and scores differ in length");
    }
    std::vector<std::uint64_t> values;
    values.reserve(scores.size());
    for (const auto& s : scores) {
        values.push_back(s.value);
    }
    switch (config.regime) {
    case Regime::marginal:
        return {calibrate_marginal(values, alpha, kind), std::nullopt};
    case Regime::conditional: {
        std::vector<std::uint64_t> ys;
        ys.reserve(scores.size());
        for (const auto& s : scores) {
            ys.push_back(s.y);
        }
        auto partition = make_partition(ys, config.bins, m);
        auto q = calibrate_conditional(scores, partition, alpha, kind);
        return {q, std::move(partition)};
    }
    case Regime::unique:
        return {calibrate_unique(calib, values, config.m_prime, alpha, rng, kind), std::nullopt};
    }
    throw ConfigError("unknown regime");
}

// ---------------------------------------------------------------------------
// Sidecars

void write_calibration(std::ostream& out, const CalibrationQuantile& q) {
    using namespace detail;
    write_magic(out, kCalibrationMagic, kSidecarVersion);
    write_u8(out, static_cast<std::uint8_t>(q.kind));
    write_u8(out, q.threshold ? 1 : 0);
    write_u64(out, q.threshold.value_or(0));
    write_u64(out, q.n_effective);
    write_f64(out, q.alpha);
    if (!out) {
        throw FormatError("failed writing calibration sidecar");
    }
}

CalibrationQuantile read_calibration(std::istream& in) {
    using namespace detail;
    expect_magic(in, kCalibrationMagic, kSidecarVersion);
    CalibrationQuantile q;
    const auto kind = read_u8(in);
    if (kind > 2) {
        throw FormatError("unknown score kind in calibration sidecar");
    }
    q.kind = static_cast<ScoreKind>(kind);
    const auto has = read_u8(in);
    const auto value = read_u64(in);
    if (has) {
        q.threshold = value;
    }
    q.n_effective = static_cast<std::size_t>(read_u64(in));
    q.alpha = read_f64(in);
    return q;
}

void write_adaptive_model(std::ostream& out, const AdaptiveModel& model) {
    using namespace detail;
    write_magic(out, kModelMagic, kSidecarVersion);
    write_u64(out, model.m());
    write_u32(out, static_cast<std::uint32_t>(model.grid_size()));
    write_u32(out, static_cast<std::uint32_t>(model.bins()));
    for (const auto c : model.cuts()) {
        write_u64(out, c);
    }
    for (const auto v : model.table()) {
        write_u64(out, v);
    }
    if (!out) {
        throw FormatError("failed writing adaptive model sidecar");
    }
}

AdaptiveModel read_adaptive_model(std::istream& in) {
    using namespace detail;
    expect_magic(in, kModelMagic, kSidecarVersion);
    const auto m = read_u64(in);
    const auto grid = read_u32(in);
    const auto bins = read_u32(in);
    if (grid < 2 || bins == 0 || static_cast<std::uint64_t>(grid) * bins > (std::uint64_t{1} << 28)) {
        throw FormatError("invalid adaptive model dimensions");
    }
    std::vector<std::uint64_t> cuts(bins - 1);
    for (auto& c : cuts) {
        c = read_u64(in);
    }
    std::vector<std::uint64_t> table(static_cast<std::size_t>(grid) * bins);
    for (auto& v : table) {
        v = read_u64(in);
    }
    try {
        return AdaptiveModel(std::move(cuts), std::move(table), grid, m);
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("corrupt adaptive model: ") + e.what());
    }
}

} // namespace confsketch
