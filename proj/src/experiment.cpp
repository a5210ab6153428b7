#include "confsketch/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "confsketch/errors.hpp"
#include "confsketch/generators.hpp"

namespace confsketch {
namespace {

// Sub-stream ids for derive_seed. Each stage owns its generator so that the
// unique regime's extra draws leave queries untouched.
enum Stream : std::uint64_t { kData = 1, kHash = 2, kSplit = 3, kCalib = 4, kQuery = 5 };

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "1" || text == "true" || text == "yes") {
        return true;
    }
    if (text == "0" || text == "false" || text == "no") {
        return false;
    }
    throw ConfigError("bad boolean for " + std::string(key) + ": '" + std::string(text) + "'");
}

void append_double(std::string& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

MetricsRow base_row(const ExperimentConfig& config, std::size_t rep) {
    MetricsRow row;
    row.rep = rep;
    row.regime = config.regime.regime;
    row.alpha = config.alpha;
    row.pi = config.pi;
    return row;
}

std::vector<std::string> generate_stream(const ExperimentConfig& config, Rng& rng,
                                         std::optional<ZipfSource>& zipf, std::optional<PitmanYorSource>& pyp) {
    std::vector<std::string> stream;
    stream.reserve(config.m);
    if (config.family == Family::zipf) {
        zipf.emplace(config.zipf_a);
        for (std::uint64_t i = 0; i < config.m; ++i) {
            stream.push_back(zipf_token(zipf->sample(rng)));
        }
    } else {
        pyp.emplace(config.pyp_lambda, config.pyp_sigma);
        for (std::uint64_t i = 0; i < config.m; ++i) {
            stream.push_back(pitman_yor_token(pyp->next(rng)));
        }
    }
    return stream;
}

std::vector<MetricsRow> repetition_body(const ExperimentConfig& config, std::size_t rep) {
    const std::uint64_t rep_seed = derive_seed(config.seed, rep);
    Rng data_rng(derive_seed(rep_seed, kData));
    Rng split_rng(derive_seed(rep_seed, kSplit));
    Rng calib_rng(derive_seed(rep_seed, kCalib));
    Rng query_rng(derive_seed(rep_seed, kQuery));

    std::optional<ZipfSource> zipf;
    std::optional<PitmanYorSource> pyp;
    const auto stream = generate_stream(config, data_rng, zipf, pyp);

    FrequencyMap shadow;
    for (const auto& t : stream) {
        ++shadow[t];
    }

    const SketchConfig sketch_config{config.kind, config.depth, config.width, derive_seed(rep_seed, kHash)};
    const auto result = run_pipeline(stream, config.m0, sketch_config);
    const auto pairs = build_supervised(result.warmup, result.tracked, result.sketch);
    const std::uint64_t m_sketched = result.sketch.items_seen();

    const auto split = split_train_calib(pairs, static_cast<std::size_t>(config.train_size()), split_rng);
    std::optional<AdaptiveModel> model;
    if (config.score == ScoreKind::adaptive) {
        model = fit_adaptive(split.train, config.grid_size, config.fup_bins, m_sketched);
    }
    std::vector<ConformityScore> scores;
    scores.reserve(split.calib.size());
    for (const auto& p : split.calib) {
        scores.push_back(model ? score_adaptive(*model, p) : score_fixed(p));
    }
    const auto calibration =
        calibrate(config.regime, split.calib, scores, config.alpha, m_sketched, config.score, calib_rng);

    MetricsRow summary = base_row(config, rep);
    summary.threshold = calibration.quantile.threshold;
    summary.sentinel = calibration.quantile.unbounded();
    if (config.queries == 0) {
        summary.diagnostic = "warning: no queries";
        return {summary};
    }

    const ShiftMixture::Base base = [&](Rng& r) -> std::string {
        if (zipf) {
            return zipf_token(zipf->sample(r));
        }
        return pitman_yor_token(pyp->peek(r));
    };
    const ShiftMixture mixture(base, config.pi);

    std::vector<std::string> tokens;
    std::vector<ConfidenceInterval> intervals;
    std::vector<std::uint64_t> truths;
    std::vector<std::uint64_t> sketched_truths;
    tokens.reserve(config.queries);
    intervals.reserve(config.queries);
    truths.reserve(config.queries);
    sketched_truths.reserve(config.queries);
    const AdaptiveModel* model_ptr = model ? &*model : nullptr;
    for (std::size_t q = 0; q < config.queries; ++q) {
        auto draw = mixture.sample(query_rng);
        const auto it = shadow.find(draw.token);
        const std::uint64_t f = it == shadow.end() ? 0 : it->second;
        intervals.push_back(config.exact_tracked
                                ? predict_lower_exact_tracked(draw.token, result.sketch, result.warmup,
                                                              result.tracked, calibration.quantile, config.score,
                                                              model_ptr)
                                : predict_lower(draw.token, result.sketch, result.warmup, calibration.quantile,
                                                config.score, model_ptr));
        truths.push_back(f);
        sketched_truths.push_back(f - result.warmup.count(draw.token));
        tokens.push_back(std::move(draw.token));
    }

    const auto overall = coverage_and_length(intervals, truths);
    summary.coverage = overall.coverage;
    summary.mean_length = overall.mean_length;
    summary.queries = overall.n;

    // Unique coverage: average over consecutive test multisets of size M.
    const std::size_t sets = config.queries / config.test_size;
    if (sets > 0) {
        double sum = 0.0;
        for (std::size_t s = 0; s < sets; ++s) {
            const std::size_t off = s * config.test_size;
            const std::span<const std::string> tk(tokens.data() + off, config.test_size);
            const std::span<const ConfidenceInterval> iv(intervals.data() + off, config.test_size);
            const std::span<const std::uint64_t> tr(truths.data() + off, config.test_size);
            sum += unique_metrics(tk, iv, tr).coverage;
        }
        summary.unique_coverage = sum / static_cast<double>(sets);
    }

    std::vector<MetricsRow> rows{summary};
    if (calibration.partition) {
        // Stratified by the sketched-part frequency Y, the variable the
        // calibration partition is defined on.
        for (const auto& bm : stratified_metrics(intervals, truths, *calibration.partition, sketched_truths)) {
            MetricsRow row = base_row(config, rep);
            row.bin_id = bm.bin_id;
            row.bin = bm.bin;
            row.threshold = summary.threshold;
            row.sentinel = summary.sentinel;
            if (bm.metrics) {
                row.coverage = bm.metrics->coverage;
                row.mean_length = bm.metrics->mean_length;
                row.queries = bm.metrics->n;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace

std::string_view to_string(Family family) noexcept {
    return family == Family::zipf ? "zipf" : "pyp";
}

Family parse_family(std::string_view name) {
    if (name == "zipf") {
        return Family::zipf;
    }
    if (name == "pyp" || name == "pitman-yor" || name == "pitman_yor") {
        return Family::pitman_yor;
    }
    throw ConfigError("unknown generator family '" + std::string(name) + "'");
}

std::uint64_t ExperimentConfig::train_size() const noexcept {
    if (m0_train) {
        return *m0_train;
    }
    return score == ScoreKind::adaptive ? m0 / 2 : 0;
}

void ExperimentConfig::validate() const {
    if (m0 == 0 || m0 >= m) {
        throw ConfigError("need 0 < m0 < m");
    }
    if (train_size() >= m0) {
        throw ConfigError("m0_train must leave calibration pairs (m0_train < m0)");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    if (repetitions == 0) {
        throw ConfigError("repetitions must be at least 1");
    }
    if (!(pi >= 0.0 && pi <= 1.0)) {
        throw ConfigError("pi must lie in [0, 1]");
    }
    if (score == ScoreKind::upper_fixed) {
        throw ConfigError("experiments use lower-bound scores (fixed or adaptive)");
    }
    if (score == ScoreKind::adaptive && train_size() == 0) {
        throw ConfigError("adaptive scores need m0_train > 0");
    }
    if (test_size == 0) {
        throw ConfigError("test_size must be at least 1");
    }
    if (regime.regime == Regime::conditional && regime.bins == 0) {
        throw ConfigError("conditional regime needs L >= 1");
    }
    if (regime.regime == Regime::unique && regime.m_prime == 0) {
        throw ConfigError("unique regime needs m_prime >= 1");
    }
    if (depth == 0 || width < 2) {
        throw ConfigError("sketch needs d >= 1 and w >= 2");
    }
}

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos) {
            view = view.substr(0, hash);
        }
        view = trim(view);
        if (view.empty()) {
            continue;
        }
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const auto key = trim(view.substr(0, eq));
        const auto value = trim(view.substr(eq + 1));
        using U = std::uint64_t;
        using Z = std::size_t;
        if (key == "family") {
            c.family = parse_family(value);
        } else if (key == "zipf_a" || key == "a") {
            c.zipf_a = parse_number<double>(key, value);
        } else if (key == "pyp_lambda" || key == "lambda") {
            c.pyp_lambda = parse_number<double>(key, value);
        } else if (key == "pyp_sigma" || key == "sigma") {
            c.pyp_sigma = parse_number<double>(key, value);
        } else if (key == "m") {
            c.m = parse_number<U>(key, value);
        } else if (key == "m0") {
            c.m0 = parse_number<U>(key, value);
        } else if (key == "m0_train") {
            c.m0_train = parse_number<U>(key, value);
        } else if (key == "kind" || key == "sketch") {
            c.kind = parse_sketch_kind(value);
        } else if (key == "d" || key == "depth") {
            c.depth = parse_number<Z>(key, value);
        } else if (key == "w" || key == "width") {
            c.width = parse_number<Z>(key, value);
        } else if (key == "seed") {
            c.seed = parse_number<U>(key, value);
        } else if (key == "score") {
            c.score = parse_score_kind(value);
        } else if (key == "grid_size" || key == "T") {
            c.grid_size = parse_number<Z>(key, value);
        } else if (key == "fup_bins") {
            c.fup_bins = parse_number<Z>(key, value);
        } else if (key == "regime") {
            c.regime.regime = parse_regime(value);
        } else if (key == "L" || key == "bins") {
            c.regime.bins = parse_number<Z>(key, value);
        } else if (key == "m_prime") {
            c.regime.m_prime = parse_number<Z>(key, value);
        } else if (key == "alpha") {
            c.alpha = parse_number<double>(key, value);
        } else if (key == "queries") {
            c.queries = parse_number<Z>(key, value);
        } else if (key == "test_size" || key == "M") {
            c.test_size = parse_number<Z>(key, value);
        } else if (key == "pi") {
            c.pi = parse_number<double>(key, value);
        } else if (key == "exact_tracked") {
            c.exact_tracked = parse_bool(key, value);
        } else if (key == "reps" || key == "repetitions" || key == "R") {
            c.repetitions = parse_number<Z>(key, value);
        } else if (key == "threads") {
            c.threads = parse_number<Z>(key, value);
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    return parse_config(in);
}

CoverageLength coverage_and_length(std::span<const ConfidenceInterval> intervals,
                                   std::span<const std::uint64_t> truths) {
    if (intervals.size() != truths.size()) {
        throw ConfigError("intervals and truths differ in length");
    }
    if (intervals.empty()) {
        throw ConfigError("no intervals to score");
    }
    std::size_t hits = 0;
    double width = 0.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        hits += intervals[i].contains(truths[i]) ? 1 : 0;
        width += static_cast<double>(intervals[i].width());
    }
    const auto n = static_cast<double>(intervals.size());
    return {static_cast<double>(hits) / n, width / n, intervals.size()};
}

std::vector<BinMetrics> stratified_metrics(std::span<const ConfidenceInterval> intervals,
                                           std::span<const std::uint64_t> truths,
                                           const FrequencyPartition& partition,
                                           std::span<const std::uint64_t> keys) {
    if (intervals.size() != truths.size()) {
        throw ConfigError("intervals and truths differ in length");
    }
    if (keys.empty()) {
        keys = truths;
    } else if (keys.size() != truths.size()) {
        throw ConfigError("stratification keys and truths differ in length");
    }
    std::vector<std::vector<ConfidenceInterval>> iv(partition.size());
    std::vector<std::vector<std::uint64_t>> tr(partition.size());
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto l = partition.bin_of(keys[i]);
        iv[l].push_back(intervals[i]);
        tr[l].push_back(truths[i]);
    }
    std::vector<BinMetrics> out;
    for (std::size_t l = 0; l < partition.size(); ++l) {
        BinMetrics bm{l, partition[l], std::nullopt};
        if (!iv[l].empty()) {
            bm.metrics = coverage_and_length(iv[l], tr[l]);
        }
        out.push_back(bm);
    }
    return out;
}

CoverageLength unique_metrics(std::span<const std::string> tokens, std::span<const ConfidenceInterval> intervals,
                              std::span<const std::uint64_t> truths) {
    if (tokens.size() != intervals.size() || tokens.size() != truths.size()) {
        throw ConfigError("tokens, intervals and truths differ in length");
    }
    std::unordered_set<std::string_view> seen;
    std::vector<ConfidenceInterval> iv;
    std::vector<std::uint64_t> tr;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (seen.insert(tokens[i]).second) {
            iv.push_back(intervals[i]);
            tr.push_back(truths[i]);
        }
    }
    return coverage_and_length(iv, tr);
}

std::vector<MetricsRow> run_repetition(const ExperimentConfig& config, std::size_t rep) {
    try {
        return repetition_body(config, rep);
    } catch (const std::exception& e) {
        MetricsRow row = base_row(config, rep);
        row.diagnostic = std::string("error: ") + e.what();
        return {row};
    }
}

std::vector<MetricsRow> run_experiment(const ExperimentConfig& config) {
    config.validate();
    const std::size_t reps = config.repetitions;
    std::size_t workers = config.threads ? config.threads : std::max(1U, std::thread::hardware_concurrency());
    workers = std::min(workers, reps);

    std::vector<std::vector<MetricsRow>> per_rep(reps);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t r = next++; r < reps; r = next++) {
            per_rep[r] = run_repetition(config, r);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < workers; ++i) {
            pool.emplace_back(work);
        }
    }
    std::vector<MetricsRow> rows;
    for (auto& r : per_rep) {
        rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    return rows;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    std::string buf(kMetricsCsvHeader);
    buf += '\n';
    for (const auto& row : rows) {
        buf += std::to_string(row.rep);
        buf += ',';
        buf += to_string(row.regime);
        buf += ',';
        append_double(buf, row.alpha);
        buf += ',';
        if (row.coverage) {
            append_double(buf, *row.coverage);
        }
        buf += ',';
        if (row.mean_length) {
            append_double(buf, *row.mean_length);
        }
        buf += ',';
        if (row.bin_id) {
            buf += std::to_string(*row.bin_id);
        }
        buf += ',';
        if (row.bin) {
            buf += std::to_string(row.bin->lo);
        }
        buf += ',';
        if (row.bin) {
            buf += std::to_string(row.bin->hi);
        }
        buf += ',';
        if (row.unique_coverage) {
            append_double(buf, *row.unique_coverage);
        }
        buf += ',';
        append_double(buf, row.pi);
        buf += '\n';
    }
    out << buf;
    if (!out) {
        throw FormatError("failed writing metrics CSV");
    }
}

} // namespace confsketch
