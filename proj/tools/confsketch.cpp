// confsketch: command-line front end for the sketch, conformal and theory layers.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "confsketch/conformal.hpp"
#include "confsketch/errors.hpp"
#include "confsketch/experiment.hpp"
#include "confsketch/generators.hpp"
#include "confsketch/pipeline.hpp"
#include "confsketch/sketch.hpp"
#include "confsketch/theory.hpp"

namespace fs = std::filesystem;
using namespace confsketch;

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) {
        throw ConfigError("cannot open " + path);
    }
    return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) {
        throw ConfigError("cannot write " + path);
    }
    return out;
}

std::string tracked_path(const std::string& snapshot) { return snapshot + ".tracked.tsv"; }
std::string calib_path(const std::string& snapshot) { return snapshot + ".calib.tsv"; }
std::string model_path(const std::string& snapshot) { return snapshot + ".model"; }

// ---------------------------------------------------------------------------
// generate

struct GenerateOpts {
    std::string family = "zipf";
    double a = 1.5;
    double lambda = 5000.0;
    double sigma = 0.5;
    std::uint64_t n = 20000;
    std::uint64_t seed = 0;
    std::string out = "-";
};

void run_generate(const GenerateOpts& o) {
    Rng rng(o.seed);
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (o.out != "-") {
        file = open_out(o.out);
        out = &file;
    }
    std::string buf;
    if (parse_family(o.family) == Family::zipf) {
        const ZipfSource src(o.a);
        for (std::uint64_t i = 0; i < o.n; ++i) {
            buf += zipf_token(src.sample(rng));
            buf += '\n';
        }
    } else {
        PitmanYorSource src(o.lambda, o.sigma);
        for (std::uint64_t i = 0; i < o.n; ++i) {
            buf += pitman_yor_token(src.next(rng));
            buf += '\n';
        }
    }
    *out << buf;
}

// ---------------------------------------------------------------------------
// sketch

struct SketchOpts {
    std::string kind = "cmscu";
    std::size_t d = 3;
    std::size_t w = 200;
    std::uint64_t seed = 0;
    std::uint64_t m0 = 2000;
    std::string in = "-";
    std::string out;
    std::string score = "fixed";
    std::uint64_t m0_train = 0;
    std::size_t grid = 100;
    std::size_t fup_bins = 20;
};

void write_pairs_tsv(const std::string& path, std::span<const SupervisedPair> pairs) {
    // Calibration multiset in the tracked-TSV layout: token, multiplicity, y.
    WarmupDictionary counts;
    TrackedCounts tracked;
    for (const auto& p : pairs) {
        auto [it, fresh] = counts.counts.try_emplace(p.token, 0);
        if (fresh) {
            counts.first_seen.push_back(p.token);
            tracked.counts[p.token] = p.y;
        }
        ++it->second;
    }
    auto out = open_out(path);
    write_tracked_tsv(out, counts, tracked);
}

void run_sketch(const SketchOpts& o) {
    std::vector<std::string> tokens;
    if (o.in == "-") {
        tokens = read_token_lines(std::cin);
    } else {
        auto in = open_in(o.in);
        tokens = read_token_lines(in);
    }
    const SketchConfig config{parse_sketch_kind(o.kind), o.d, o.w, o.seed};
    const auto result = run_pipeline(tokens, o.m0, config);
    {
        auto out = open_out(o.out, std::ios::binary);
        write_snapshot(out, result.sketch);
    }
    {
        auto out = open_out(tracked_path(o.out));
        write_tracked_tsv(out, result.warmup, result.tracked);
    }
    const auto kind = parse_score_kind(o.score);
    if (kind == ScoreKind::adaptive) {
        if (o.m0_train == 0 || o.m0_train >= o.m0) {
            throw ConfigError("adaptive scores need 0 < --m0-train < --m0");
        }
        const auto pairs = build_supervised(result.warmup, result.tracked, result.sketch);
        Rng rng(derive_seed(o.seed, 3));
        const auto split = split_train_calib(pairs, o.m0_train, rng);
        const auto model = fit_adaptive(split.train, o.grid, o.fup_bins, result.sketch.items_seen());
        auto out = open_out(model_path(o.out), std::ios::binary);
        write_adaptive_model(out, model);
        write_pairs_tsv(calib_path(o.out), split.calib);
    } else {
        // Drop stale sidecars of an earlier adaptive run at the same path.
        fs::remove(model_path(o.out));
        fs::remove(calib_path(o.out));
    }
    std::cerr << "sketched " << result.sketch.items_seen() << " items after " << o.m0 << " warm-up items, "
              << result.warmup.distinct() << " tracked tokens\n";
}

// ---------------------------------------------------------------------------
// query

struct QueryOpts {
    std::string snapshot;
    double alpha = 0.05;
    std::string regime = "marginal";
    std::size_t L = 5;
    std::size_t m_prime = 1;
    std::vector<std::string> tokens;
    std::string tokens_file;
    std::uint64_t seed = 0;
    bool exact_tracked = false;
    bool two_sided = false;
    std::string save_calibration;
};

void run_query(const QueryOpts& o) {
    CountMinSketch sketch = [&] {
        auto in = open_in(o.snapshot, std::ios::binary);
        return read_snapshot(in);
    }();
    auto [warmup, tracked] = [&] {
        auto in = open_in(tracked_path(o.snapshot));
        return read_tracked_tsv(in);
    }();

    std::optional<AdaptiveModel> model;
    std::vector<SupervisedPair> calib;
    if (fs::exists(model_path(o.snapshot))) {
        auto in = open_in(model_path(o.snapshot), std::ios::binary);
        model = read_adaptive_model(in);
        auto cin = open_in(calib_path(o.snapshot));
        auto [mult, ys] = read_tracked_tsv(cin);
        for (const auto& token : mult.first_seen) {
            const SupervisedPair p{token, ys.count(token), sketch.upper_bound(token)};
            calib.insert(calib.end(), mult.count(token), p);
        }
    } else {
        calib = build_supervised(warmup, tracked, sketch);
    }

    std::vector<std::string> queries = o.tokens;
    if (!o.tokens_file.empty()) {
        auto in = open_in(o.tokens_file);
        auto more = read_token_lines(in);
        queries.insert(queries.end(), more.begin(), more.end());
    }

    if (o.two_sided) {
        if (model) {
            throw ConfigError("two-sided intervals use fixed scores only");
        }
        std::vector<std::uint64_t> lo;
        std::vector<std::uint64_t> up;
        for (const auto& p : calib) {
            lo.push_back(score_fixed(p).value);
            up.push_back(score_upper(p).value);
        }
        const auto cal = calibrate_two_sided(lo, up, o.alpha);
        for (const auto& t : queries) {
            const auto iv = two_sided_bonferroni(t, sketch, warmup, cal);
            std::cout << t << '\t' << iv.lower << '\t' << iv.upper << '\n';
        }
        return;
    }

    const ScoreKind kind = model ? ScoreKind::adaptive : ScoreKind::fixed;
    std::vector<ConformityScore> scores;
    for (const auto& p : calib) {
        scores.push_back(model ? score_adaptive(*model, p) : score_fixed(p));
    }
    const RegimeConfig regime{parse_regime(o.regime), o.L, o.m_prime};
    Rng rng(o.seed);
    const auto cal = calibrate(regime, calib, scores, o.alpha, sketch.items_seen(), kind, rng);
    if (!o.save_calibration.empty()) {
        auto out = open_out(o.save_calibration, std::ios::binary);
        write_calibration(out, cal.quantile);
    }
    const AdaptiveModel* mp = model ? &*model : nullptr;
    for (const auto& t : queries) {
        const auto iv = o.exact_tracked
                            ? predict_lower_exact_tracked(t, sketch, warmup, tracked, cal.quantile, kind, mp)
                            : predict_lower(t, sketch, warmup, cal.quantile, kind, mp);
        std::cout << t << '\t' << iv.lower << '\t' << iv.upper << '\n';
    }
}

// ---------------------------------------------------------------------------
// experiment

void run_experiment_cmd(const std::string& config_path, const std::string& out_path) {
    const auto config = load_config(config_path);
    const auto rows = run_experiment(config);
    for (const auto& r : rows) {
        if (!r.diagnostic.empty()) {
            std::cerr << "rep " << r.rep << ": " << r.diagnostic << '\n';
        }
    }
    if (out_path == "-") {
        write_metrics_csv(std::cout, rows);
    } else {
        auto out = open_out(out_path);
        write_metrics_csv(out, rows);
    }
}

// ---------------------------------------------------------------------------
// theory

using Args = std::map<std::string, std::string>;

double num(const Args& a, const std::string& key) {
    const auto it = a.find(key);
    if (it == a.end()) {
        throw ConfigError("missing argument " + key);
    }
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) {
        throw ConfigError("bad number for " + key + ": " + it->second);
    }
    return v;
}

std::size_t count_arg(const Args& a, const std::string& key) {
    const double v = num(a, key);
    if (v < 0 || v != std::floor(v)) {
        throw ConfigError(key + " must be a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

std::vector<double> num_list(const Args& a, const std::string& key) {
    const auto it = a.find(key);
    if (it == a.end()) {
        throw ConfigError("missing argument " + key);
    }
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string part;
    while (std::getline(ss, part, ',')) {
        out.push_back(std::stod(part));
    }
    return out;
}

// "0.1,0.9" or the single probability p of a two-atom law.
theory::DiscreteDist dist_arg(const Args& a, const std::string& key) {
    auto p = num_list(a, key);
    if (p.size() == 1) {
        return theory::two_symbol(p[0]);
    }
    return theory::DiscreteDist(std::move(p));
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string q = "\"";
    for (const char c : s) {
        q += c;
        if (c == '"') {
            q += '"';
        }
    }
    return q + '"';
}

std::string set_label(theory::AtomSet s) {
    std::string out = "{";
    for (std::size_t j = 0; s; ++j, s >>= 1) {
        if (s & 1U) {
            out += (out.size() > 1 ? "," : "") + ("a" + std::to_string(j + 1));
        }
    }
    return out + "}";
}

// Each result is (suffix, value); a non-empty suffix names one of several outputs.
std::vector<std::pair<std::string, double>> eval_op(const std::string& op, const Args& a) {
    using namespace theory;
    if (op == "tau") {
        return {{"", tau(num(a, "p"))}};
    }
    if (op == "h") {
        return {{"", h(num(a, "delta"), num(a, "M"), num(a, "M_prime"))}};
    }
    if (op == "delta_two") {
        return {{"", delta_two(count_arg(a, "M"), count_arg(a, "M_prime"))}};
    }
    if (op == "delta_star") {
        return {{"", delta_star(count_arg(a, "M"), count_arg(a, "M_prime"))}};
    }
    if (op == "nu") {
        return {{"", nu(num(a, "a"))}};
    }
    if (op == "robust_coverage_bound") {
        return {{"", robust_coverage_bound(num(a, "alpha"), num(a, "a"), count_arg(a, "M"))}};
    }
    if (op == "solve_c") {
        return {{"", solve_c(count_arg(a, "M"))}};
    }
    if (op == "two_symbol_uniques") {
        return {{"", two_symbol_uniques(num(a, "p"), count_arg(a, "M"))}};
    }
    if (op == "uniques_element_pmf") {
        const auto j = count_arg(a, "j");
        if (j == 0) {
            throw ConfigError("j is a 1-based atom index");
        }
        return {{"", uniques_element_pmf(dist_arg(a, "p"), j - 1, count_arg(a, "M"))}};
    }
    if (op == "uniques_set_pmf" || op == "uniques_set_pmf_ie") {
        std::vector<std::size_t> idx;
        for (const double v : num_list(a, "set")) {
            if (v < 1 || v != std::floor(v)) {
                throw ConfigError("set holds 1-based atom indices");
            }
            idx.push_back(static_cast<std::size_t>(v) - 1);
        }
        const auto dist = dist_arg(a, "p");
        const auto set = atom_set(idx);
        const auto M = count_arg(a, "M");
        return {{"", op == "uniques_set_pmf" ? uniques_set_pmf(dist, set, M) : uniques_set_pmf_ie(dist, set, M)}};
    }
    if (op == "brute_force_uniques") {
        const auto pmf = brute_force_uniques(dist_arg(a, "p"), count_arg(a, "M"));
        std::vector<std::pair<std::string, double>> out;
        for (const auto& [set, p] : pmf.mass) {
            out.emplace_back(set_label(set), p);
        }
        return out;
    }
    if (op == "shift_gap_two") {
        const auto g = shift_gap_two(dist_arg(a, "p"), dist_arg(a, "q"), count_arg(a, "M"));
        return {{"tv_uniques", g.tv_uniques}, {"tv_base", g.tv_base}};
    }
    throw ConfigError("unknown theory operation '" + op + "'");
}

const char* const kTheoryOps =
    "tau(p) h(delta,M,M_prime) delta_two(M,M_prime) delta_star(M,M_prime) nu(a) "
    "robust_coverage_bound(alpha,a,M) solve_c(M) two_symbol_uniques(p,M) uniques_element_pmf(p,j,M) "
    "uniques_set_pmf(p,set,M) uniques_set_pmf_ie(p,set,M) brute_force_uniques(p,M) shift_gap_two(p,q,M)";

// start:stop:step expands to a sweep; anything else is a single value.
std::vector<std::string> expand(const std::string& value) {
    const auto c1 = value.find(':');
    if (c1 == std::string::npos) {
        return {value};
    }
    const auto c2 = value.find(':', c1 + 1);
    if (c2 == std::string::npos || value.find(':', c2 + 1) != std::string::npos) {
        throw ConfigError("sweep must be start:stop:step, got " + value);
    }
    const double start = std::stod(value.substr(0, c1));
    const double stop = std::stod(value.substr(c1 + 1, c2 - c1 - 1));
    const double step = std::stod(value.substr(c2 + 1));
    if (!(step > 0.0) || stop < start) {
        throw ConfigError("sweep needs step > 0 and stop >= start");
    }
    std::vector<std::string> out;
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
        out.push_back(fmt(start + static_cast<double>(i) * step));
    }
    return out;
}

void run_theory(const std::string& op, const std::vector<std::string>& raw_args, bool header) {
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    for (const auto& kv : raw_args) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("theory arguments are key=value, got " + kv);
        }
        const auto key = kv.substr(0, eq);
        const auto value = kv.substr(eq + 1);
        // Lists (p, q, set) never sweep.
        axes.emplace_back(key, value.find(',') == std::string::npos ? expand(value) : std::vector{value});
    }
    if (header) {
        std::cout << "operation,inputs,output\n";
    }
    std::vector<std::size_t> pos(axes.size(), 0);
    for (;;) {
        Args args;
        std::string inputs;
        for (std::size_t i = 0; i < axes.size(); ++i) {
            args[axes[i].first] = axes[i].second[pos[i]];
            inputs += (i ? ";" : "") + axes[i].first + "=" + axes[i].second[pos[i]];
        }
        for (const auto& [suffix, value] : eval_op(op, args)) {
            const std::string name = suffix.empty() ? op : op + "." + suffix;
            std::cout << csv_field(name) << ',' << csv_field(inputs) << ',' << fmt(value) << '\n';
        }
        std::size_t i = axes.size();
        while (i > 0) {
            --i;
            if (++pos[i] < axes[i].second.size()) {
                break;
            }
            pos[i] = 0;
            if (i == 0) {
                return;
            }
        }
        if (axes.empty()) {
            return;
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Count-min sketches with conformal frequency intervals"};
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic token stream, one token per line");
    g->add_option("--family", gen.family, "zipf or pyp")->check(CLI::IsMember({"zipf", "pyp"}));
    g->add_option("--a", gen.a, "Zipf exponent (> 1)");
    g->add_option("--lambda", gen.lambda, "Pitman-Yor concentration");
    g->add_option("--sigma", gen.sigma, "Pitman-Yor discount in [0, 1)");
    g->add_option("--n", gen.n, "Stream length");
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out, "Output file, - for stdout");

    SketchOpts sk;
    auto* s = app.add_subcommand("sketch", "Run warm-up tracking and sketch a token stream");
    s->add_option("--kind", sk.kind, "cms or cmscu");
    s->add_option("--d", sk.d, "Rows");
    s->add_option("--w", sk.w, "Buckets per row");
    s->add_option("--seed", sk.seed, "Hash seed");
    s->add_option("--m0", sk.m0, "Warm-up length");
    s->add_option("--in", sk.in, "Token file, - for stdin");
    s->add_option("--out-snapshot", sk.out, "Snapshot path; sidecars are written next to it")->required();
    s->add_option("--score", sk.score, "fixed or adaptive")->check(CLI::IsMember({"fixed", "adaptive"}));
    s->add_option("--m0-train", sk.m0_train, "Warm-up pairs used to fit the adaptive model");
    s->add_option("--grid", sk.grid, "Adaptive grid size T");
    s->add_option("--fup-bins", sk.fup_bins, "Adaptive f_up bins");

    QueryOpts qo;
    auto* q = app.add_subcommand("query", "Print token, lower and upper bound per query token");
    q->add_option("--snapshot", qo.snapshot)->required();
    q->add_option("--alpha", qo.alpha);
    q->add_option("--regime", qo.regime, "marginal, conditional or unique");
    q->add_option("--L", qo.L, "Bins of the conditional regime");
    q->add_option("--m-prime", qo.m_prime, "Group size of the unique regime");
    q->add_option("--token", qo.tokens, "Query token (repeatable)");
    q->add_option("--tokens-file", qo.tokens_file, "File of query tokens, one per line");
    q->add_option("--seed", qo.seed, "Seed of the unique regime's grouping");
    q->add_flag("--exact-tracked", qo.exact_tracked, "Answer warm-up tokens with their exact count");
    q->add_flag("--two-sided", qo.two_sided, "Bonferroni two-sided intervals");
    q->add_option("--save-calibration", qo.save_calibration, "Write the calibration threshold sidecar");

    std::string config_path;
    std::string out_path = "-";
    auto* e = app.add_subcommand("experiment", "Run a configured coverage experiment and write metrics CSV");
    e->add_option("--config", config_path)->required();
    e->add_option("--out", out_path, "CSV path, - for stdout");

    std::string op;
    std::vector<std::string> targs;
    bool no_header = false;
    auto* t = app.add_subcommand("theory", "Evaluate closed-form quantities as CSV rows");
    t->add_option("--op", op, kTheoryOps)->required();
    t->add_option("--args", targs, "key=value; numeric values accept start:stop:step");
    t->add_flag("--no-header", no_header);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*g) {
            run_generate(gen);
        } else if (*s) {
            run_sketch(sk);
        } else if (*q) {
            run_query(qo);
        } else if (*e) {
            run_experiment_cmd(config_path, out_path);
        } else if (*t) {
            run_theory(op, targs, !no_header);
        }
    } catch (const std::exception& ex) {
        std::cerr << "confsketch: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
