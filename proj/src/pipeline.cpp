#include "confsketch/pipeline.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "confsketch/errors.hpp"

namespace confsketch {
namespace {

std::uint64_t lookup(const FrequencyMap& map, std::string_view token) {
    const auto it = map.find(token);
    return it == map.end() ? 0 : it->second;
}

std::string escape_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        switch (c) {
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\\': out += "\\\\"; break;
        default: out += c;
        }
    }
    return out;
}

std::string unescape_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out += s[i];
            continue;
        }
        if (++i == s.size()) {
            throw FormatError("dangling escape in tracked TSV");
        }
        switch (s[i]) {
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case '\\': out += '\\'; break;
        default: throw FormatError(std::string("unknown escape \\") + s[i] + " in tracked TSV");
        }
    }
    return out;
}

std::uint64_t parse_count(std::string_view s) {
    if (s.empty()) {
        throw FormatError("empty count field in tracked TSV");
    }
    std::uint64_t v = 0;
    for (const char c : s) {
        if (c < '0' || c > '9') {
            throw FormatError("non-numeric count '" + std::string(s) + "' in tracked TSV");
        }
        v = v * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return v;
}

} // namespace

std::uint64_t WarmupDictionary::count(std::string_view token) const { return lookup(counts, token); }

std::uint64_t TrackedCounts::count(std::string_view token) const { return lookup(counts, token); }

WarmupSketcher::WarmupSketcher(std::uint64_t m0, const SketchConfig& config)
    : sketch_(config.kind, config.seed, config.depth, config.width) {
    if (m0 == 0) {
        throw ConfigError("warm-up length m0 must be positive");
    }
    warmup_.m0 = m0;
}

void WarmupSketcher::push(std::string_view token) {
    if (pushed_ < warmup_.m0) {
        auto [it, inserted] = warmup_.counts.try_emplace(std::string(token), 0);
        if (inserted) {
            warmup_.first_seen.push_back(it->first);
            tracked_.counts.emplace(it->first, 0);
        }
        ++it->second;
    } else {
        sketch_.update(token);
        if (auto it = tracked_.counts.find(token); it != tracked_.counts.end()) {
            ++it->second;
        }
    }
    ++pushed_;
}

PipelineResult WarmupSketcher::finish() && {
    if (pushed_ <= warmup_.m0) {
        throw ConfigError("stream of length " + std::to_string(pushed_) +
                          " leaves nothing to sketch after warm-up m0=" + std::to_string(warmup_.m0));
    }
    sketch_.freeze();
    return {std::move(warmup_), std::move(tracked_), std::move(sketch_)};
}

PipelineResult run_pipeline(std::span<const std::string> stream, std::uint64_t m0, const SketchConfig& config) {
    if (m0 >= stream.size()) {
        throw ConfigError("warm-up length m0=" + std::to_string(m0) + " must be below stream length " +
                          std::to_string(stream.size()));
    }
    WarmupSketcher sketcher(m0, config);
    for (const auto& token : stream) {
        sketcher.push(token);
    }
    return std::move(sketcher).finish();
}

std::vector<SupervisedPair> build_supervised(const WarmupDictionary& warmup, const TrackedCounts& tracked,
                                             const CountMinSketch& sketch, PairIndexing indexing) {
    std::vector<SupervisedPair> pairs;
    pairs.reserve(indexing == PairIndexing::per_observation ? warmup.m0 : warmup.distinct());
    for (const auto& token : warmup.first_seen) {
        const SupervisedPair pair{token, tracked.count(token), sketch.upper_bound(token)};
        if (pair.y > pair.f_up) {
            throw InvariantError("tracked frequency exceeds sketch upper bound for '" + token + "'");
        }
        const std::uint64_t copies = indexing == PairIndexing::per_observation ? warmup.count(token) : 1;
        pairs.insert(pairs.end(), copies, pair);
    }
    return pairs;
}

TrainCalibSplit split_train_calib(std::span<const SupervisedPair> pairs, std::size_t m0_train, Rng& rng) {
    if (m0_train > pairs.size()) {
        throw ConfigError("m0_train=" + std::to_string(m0_train) + " exceeds the " +
                          std::to_string(pairs.size()) + " supervised pairs");
    }
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(order.begin(), order.end());
    TrainCalibSplit split;
    split.train.reserve(m0_train);
    split.calib.reserve(pairs.size() - m0_train);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < m0_train ? split.train : split.calib).push_back(pairs[order[i]]);
    }
    return split;
}

void write_tracked_tsv(std::ostream& out, const WarmupDictionary& warmup, const TrackedCounts& tracked) {
    for (const auto& token : warmup.first_seen) {
        out << escape_field(token) << '\t' << warmup.count(token) << '\t' << tracked.count(token) << '\n';
    }
    if (!out) {
        throw FormatError("failed writing tracked TSV");
    }
}

std::pair<WarmupDictionary, TrackedCounts> read_tracked_tsv(std::istream& in) {
    WarmupDictionary warmup;
    TrackedCounts tracked;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw FormatError("tracked TSV line " + std::to_string(line_no) + " needs exactly 3 fields");
        }
        auto token = unescape_field(std::string_view(line).substr(0, t1));
        const auto f_wu = parse_count(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
        const auto f_sv = parse_count(std::string_view(line).substr(t2 + 1));
        if (f_wu == 0) {
            throw FormatError("tracked TSV line " + std::to_string(line_no) + " has zero warm-up count");
        }
        if (!warmup.counts.emplace(token, f_wu).second) {
            throw FormatError("duplicate token on tracked TSV line " + std::to_string(line_no));
        }
        warmup.first_seen.push_back(token);
        warmup.m0 += f_wu;
        tracked.counts.emplace(std::move(token), f_sv);
    }
    return {std::move(warmup), std::move(tracked)};
}

std::vector<std::string> read_token_lines(std::istream& in) {
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(std::move(line));
    }
    return tokens;
}

} // namespace confsketch
