// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "confsketch/experiment.hpp"
#include "confsketch/generators.hpp"
#include "confsketch/pipeline.hpp"
#include "confsketch/sketch.hpp"
#include "confsketch/theory.hpp"

using namespace confsketch;
namespace th = confsketch::theory;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<th::DiscreteDist> grid_dists(std::size_t K, int den) {
    std::vector<th::DiscreteDist> out;
    std::vector<int> parts(K, 1);
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
        if (i + 1 == K) {
            parts[i] = left;
            std::vector<double> p;
            double t = 0.0;
            for (const int x : parts) {
                p.push_back(static_cast<double>(x) / den);
                t += p.back();
            }
            p.back() += 1.0 - t;
            out.emplace_back(p);
            return;
        }
        for (int x = 1; x + static_cast<int>(K - i - 1) <= left; ++x) {
            parts[i] = x;
            rec(i + 1, left - x);
        }
    };
    rec(0, den);
    return out;
}

std::vector<std::string> zipf_stream(const ZipfSource& z, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> s;
    s.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.push_back(zipf_token(z.sample(rng)));
    }
    return s;
}

ExperimentConfig desk_config() {
    ExperimentConfig c;
    c.family = Family::zipf;
    c.zipf_a = 1.5;
    c.m = 20000;
    c.m0 = 2000;
    c.kind = SketchKind::cms_cu;
    c.depth = 3;
    c.width = 200;
    c.alpha = 0.05;
    c.repetitions = 10;
    c.queries = 2000;
    c.seed = 2024;
    return c;
}

double mean_coverage(const std::vector<MetricsRow>& rows, std::size_t* n_queries = nullptr) {
    double sum = 0.0;
    std::size_t k = 0;
    std::size_t q = 0;
    for (const auto& r : rows) {
        if (!r.bin_id && r.coverage) {
            sum += *r.coverage;
            q += r.queries;
            ++k;
        }
    }
    if (n_queries) {
        *n_queries = q;
    }
    return k ? sum / static_cast<double>(k) : std::nan("");
}

// ---------------------------------------------------------------------------

Outcome c1_worked_numbers() {
    Outcome o;
    const double n12 = th::nu(1.2);
    const double n11 = th::nu(1.1);
    const double b12 = th::robust_coverage_bound(0.05, 1.2, 100);
    const double b11 = th::robust_coverage_bound(0.05, 1.1, 100);
    o.require(std::abs(n12 - 0.067) <= 1e-3, "nu(1.2)=" + fmt("%.5f", n12));
    o.require(std::abs(n11 - 0.035) <= 1e-3, "nu(1.1)=" + fmt("%.5f", n11));
    o.require(std::abs(b12 - 0.806) <= 1e-3, "bound(1.2)=" + fmt("%.5f", b12));
    o.require(std::abs(b11 - 0.870) <= 1e-3, "bound(1.1)=" + fmt("%.5f", b11));
    double worst = 0.0;
    for (std::size_t K = 1; K <= 4; ++K) {
        for (const auto& d : grid_dists(K, 10)) {
            for (std::size_t j = 0; j < K; ++j) {
                for (const std::size_t M : {1, 2}) {
                    worst = std::max(worst, std::abs(th::uniques_element_pmf(d, j, M) - d.p(j)));
                }
            }
        }
    }
    o.require(worst < 1e-12, "U^[1,2] vs P diff " + fmt("%.3g", worst));
    o.note("nu(1.2)=" + fmt("%.4f", n12) + " nu(1.1)=" + fmt("%.4f", n11) + " bounds " + fmt("%.4f", b12) + "/" +
           fmt("%.4f", b11) + " U-P max diff " + fmt("%.2g", worst));
    return o;
}

Outcome c2_oracle_equivalence() {
    Outcome o;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t K = 1; K <= 4; ++K) {
        for (const auto& d : grid_dists(K, 10)) {
            for (std::size_t M = 1; M <= 5; ++M) {
                const auto bf = th::brute_force_uniques(d, M);
                for (th::AtomSet s = 1; s < (th::AtomSet{1} << K); ++s) {
                    const double a = th::uniques_set_pmf(d, s, M);
                    const double b = th::uniques_set_pmf_ie(d, s, M);
                    worst = std::max({worst, std::abs(a - b), std::abs(a - bf.at(s)), std::abs(b - bf.at(s))});
                    ++checked;
                }
            }
        }
    }
    o.require(worst < 1e-12, "max diff " + fmt("%.3g", worst));
    o.note(std::to_string(checked) + " set probabilities, max abs diff " + fmt("%.2g", worst));
    return o;
}

Outcome c3_two_symbol() {
    Outcome o;
    double worst = 0.0;
    double worst_tau = 0.0;
    for (int i = 1; i <= 99; ++i) {
        const double p = i / 100.0;
        const auto d = th::two_symbol(p);
        for (std::size_t M = 1; M <= 10; ++M) {
            worst = std::max(worst, std::abs(th::uniques_element_pmf(d, 0, M) - th::two_symbol_uniques(p, M)));
        }
        worst_tau = std::max(worst_tau, std::abs(th::tau(p) - th::uniques_element_pmf(d, 0, 3)));
    }
    o.require(worst < 1e-12, "closed form diff " + fmt("%.3g", worst));
    o.require(worst_tau < 1e-12, "tau diff " + fmt("%.3g", worst_tau));
    o.note("closed form max diff " + fmt("%.2g", worst) + ", tau max diff " + fmt("%.2g", worst_tau));
    return o;
}

Outcome c4_delta_solver() {
    Outcome o;
    const std::pair<std::size_t, std::size_t> cases[] = {{3, 2}, {5, 3}, {10, 4}, {50, 25}};
    double worst = 0.0;
    for (const auto& [M, Mp] : cases) {
        // Grid oracle over p in [0, 1], step 1e-6.
        double best = 0.0;
        const long n = 1000000;
        for (long i = 0; i <= n; ++i) {
            const double p = static_cast<double>(i) / n;
            best = std::max(best, std::abs(std::pow(p, M) - std::pow(1 - p, M) - std::pow(p, Mp) +
                                           std::pow(1 - p, Mp)));
        }
        worst = std::max(worst, std::abs(th::delta_two(M, Mp) - 0.5 * best));
    }
    o.require(worst < 1e-9, "grid diff " + fmt("%.3g", worst));
    o.require(th::delta_two(20, 20) == 0.0, "Delta(M,M) != 0");
    const double ratio = th::delta_two(1000, 500) / th::nu(2.0);
    o.require(std::abs(ratio - 1.0) <= 1e-2, "Delta(1000,500)/nu(2)=" + fmt("%.5f", ratio));
    o.note("grid max diff " + fmt("%.2g", worst) + ", Delta(1000,500)/nu(2)=" + fmt("%.5f", ratio) +
           ", 2*Delta(1000,500)/nu(2)=" + fmt("%.5f", 2 * ratio));
    return o;
}

Outcome c5_shift_strictness() {
    Outcome o;
    const double c3 = th::solve_c(3);
    o.require(std::abs(c3 - (3 - std::sqrt(3.0)) / 6) < 1e-9, "solve_c(3)=" + fmt("%.12f", c3));
    Rng rng(606);
    int pairs = 0;
    int strict = 0;
    for (const std::size_t M : {3, 5, 10}) {
        const double c = th::solve_c(M);
        int made = 0;
        while (made < 100) {
            const double p = c + (1 - 2 * c) * rng.uniform01();
            const double q = c + (1 - 2 * c) * rng.uniform01();
            if (p <= c || q <= c || p == q) {
                continue;
            }
            ++made;
            ++pairs;
            const auto g = th::shift_gap_two(th::two_symbol(p), th::two_symbol(q), M);
            strict += g.tv_uniques < g.tv_base;
        }
    }
    o.require(strict == pairs, std::to_string(pairs - strict) + " non-strict pairs");
    o.note("solve_c(3)=" + fmt("%.10f", c3) + ", " + std::to_string(strict) + "/" + std::to_string(pairs) + " strict");
    return o;
}

Outcome c6_sketch_correctness() {
    Outcome o;
    const ZipfSource z(1.5);
    const std::size_t m = 5000;
    const std::size_t m0 = 500;
    std::size_t bad_dom = 0;
    std::size_t bad_rows = 0;
    std::size_t bad_cu = 0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial) {
        const auto s = zipf_stream(z, m, 1000 + trial);
        const SketchConfig cms{SketchKind::cms, 3, 50, trial};
        const SketchConfig cu{SketchKind::cms_cu, 3, 50, trial};
        const auto a = run_pipeline(s, m0, cms);
        const auto b = run_pipeline(s, m0, cu);
        FrequencyMap exact;
        for (std::size_t i = m0; i < m; ++i) {
            ++exact[s[i]];
        }
        for (const auto& [tok, f] : exact) {
            bad_dom += a.sketch.upper_bound(tok) < f;
            bad_dom += b.sketch.upper_bound(tok) < f;
        }
        for (std::size_t j = 0; j < 3; ++j) {
            const auto row = a.sketch.row(j);
            bad_rows += std::accumulate(row.begin(), row.end(), std::uint64_t{0}) != m - m0;
        }
        for (std::size_t i = 0; i < a.sketch.counters().size(); ++i) {
            bad_cu += b.sketch.counters()[i] > a.sketch.counters()[i];
        }
    }
    o.require(bad_dom == 0, std::to_string(bad_dom) + " dominance violations");
    o.require(bad_rows == 0, std::to_string(bad_rows) + " bad row sums");
    o.require(bad_cu == 0, std::to_string(bad_cu) + " CU > CMS counters");
    o.note("1000 streams, dominance/row-sum/CU violations " + std::to_string(bad_dom) + "/" +
           std::to_string(bad_rows) + "/" + std::to_string(bad_cu));
    return o;
}

Outcome c7_classical_bound() {
    Outcome o;
    const ZipfSource z(1.5);
    const auto s = zipf_stream(z, 5000, 77);
    FrequencyMap exact;
    for (const auto& t : s) {
        ++exact[t];
    }
    std::size_t hit = 0;
    std::size_t total = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        CountMinSketch sk(SketchKind::cms, seed, 3, 50);
        for (const auto& t : s) {
            sk.update(t);
        }
        for (const auto& [tok, f] : exact) {
            hit += f >= sk.classical_lower_bound(tok).lower;
            ++total;
        }
    }
    const double p = static_cast<double>(hit) / static_cast<double>(total);
    const double guarantee = 1.0 - std::exp(-3.0);
    const double se = std::sqrt(guarantee * (1 - guarantee) / static_cast<double>(total));
    o.require(p >= guarantee - 3 * se, "coverage " + fmt("%.5f", p));
    o.note("P[f >= lower] = " + fmt("%.5f", p) + " over " + std::to_string(total) + " (seed, token) pairs, floor " +
           fmt("%.5f", guarantee - 3 * se));
    return o;
}

Outcome c8_conformal_coverage() {
    Outcome o;
    auto c = desk_config();
    c.regime = {Regime::marginal, 5, 1};
    const auto marg = run_experiment(c);
    const double mc = mean_coverage(marg);
    o.require(mc >= 0.94, "marginal " + fmt("%.4f", mc));

    c.regime = {Regime::conditional, 5, 1};
    const auto cond = run_experiment(c);
    std::map<std::size_t, std::pair<double, double>> bins; // bin -> (hits, n)
    for (const auto& r : cond) {
        if (r.bin_id && r.coverage) {
            bins[*r.bin_id].first += *r.coverage * static_cast<double>(r.queries);
            bins[*r.bin_id].second += static_cast<double>(r.queries);
        }
    }
    double worst_bin = 1.0;
    std::string per_bin;
    for (const auto& [b, hn] : bins) {
        const double cov = hn.first / hn.second;
        worst_bin = std::min(worst_bin, cov);
        per_bin += (per_bin.empty() ? "" : ",") + fmt("%.3f", cov);
    }
    o.require(!bins.empty() && worst_bin >= 0.93, "worst bin " + fmt("%.4f", worst_bin));

    auto u = desk_config();
    u.m = 60000;
    u.m0 = 12000;
    u.regime = {Regime::unique, 5, 100};
    u.test_size = 100;
    const auto uniq = run_experiment(u);
    double us = 0.0;
    int k = 0;
    for (const auto& r : uniq) {
        if (r.unique_coverage) {
            us += *r.unique_coverage;
            ++k;
        }
        if (!r.diagnostic.empty()) {
            o.require(false, "unique rep " + std::to_string(r.rep) + ": " + r.diagnostic);
        }
    }
    const double uc = k ? us / k : 0.0;
    o.require(k == 10 && uc >= 0.94, "unique " + fmt("%.4f", uc));
    o.note("marginal " + fmt("%.4f", mc) + ", bins [" + per_bin + "], unique " + fmt("%.4f", uc) + " (G=120)");
    return o;
}

Outcome c9_collapse() {
    Outcome o;
    auto c = desk_config();
    c.regime = {Regime::marginal, 5, 1};
    const auto marg = run_experiment(c);
    c.regime = {Regime::conditional, 1, 1};
    std::vector<MetricsRow> cond;
    for (auto& r : run_experiment(c)) {
        if (!r.bin_id) {
            cond.push_back(r);
        }
    }
    c.regime = {Regime::unique, 5, 1};
    const auto uniq = run_experiment(c);
    std::size_t mismatches = 0;
    if (cond.size() != marg.size() || uniq.size() != marg.size()) {
        ++mismatches;
    } else {
        for (std::size_t i = 0; i < marg.size(); ++i) {
            for (const MetricsRow* other : std::initializer_list<const MetricsRow*>{&cond[i], &uniq[i]}) {
                mismatches += other->threshold != marg[i].threshold || other->coverage != marg[i].coverage ||
                              other->mean_length != marg[i].mean_length ||
                              other->unique_coverage != marg[i].unique_coverage;
            }
        }
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " row mismatches");
    o.note(std::to_string(marg.size()) + " repetitions, " + std::to_string(mismatches) + " mismatches");
    return o;
}

Outcome c10_shift() {
    Outcome o;
    std::vector<double> cov;
    std::size_t n1 = 0;
    for (const double pi : {0.0, 0.5, 1.0}) {
        auto c = desk_config();
        c.repetitions = 20;
        c.pi = pi;
        std::size_t n = 0;
        cov.push_back(mean_coverage(run_experiment(c), &n));
        n1 = n;
    }
    o.require(cov[0] >= cov[1] && cov[1] >= cov[2], "not non-increasing");
    const double se = std::sqrt(0.95 * 0.05 / static_cast<double>(n1));
    o.require(cov[2] < 0.95 - 3 * se, "coverage(pi=1) " + fmt("%.4f", cov[2]));
    o.note("coverage pi=0/0.5/1: " + fmt("%.4f", cov[0]) + "/" + fmt("%.4f", cov[1]) + "/" + fmt("%.4f", cov[2]));
    return o;
}

Outcome c11_generators() {
    Outcome o;
    const ZipfSource z(2.0);
    Rng rng(11);
    const int n = 1000000;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
        ones += z.sample(rng) == 1;
    }
    const double p = 6.0 / (M_PI * M_PI);
    const double phat = static_cast<double>(ones) / n;
    o.require(std::abs(phat - p) < 3 * std::sqrt(p * (1 - p) / n), "P(Z=1)=" + fmt("%.5f", phat));

    double worst = 0.0;
    for (const double sigma : {0.0, 0.3, 0.8}) {
        PitmanYorSource s(50.0, sigma);
        Rng r(5);
        for (int i = 0; i < 2000; ++i) {
            const auto pred = s.predictive();
            worst = std::max(worst, std::abs(std::accumulate(pred.begin(), pred.end(), 0.0) - 1.0));
            s.next(r);
        }
    }
    o.require(worst < 1e-12, "PYP sum error " + fmt("%.3g", worst));

    PitmanYorSource dp(5000.0, 0.0);
    Rng r(9);
    bool exact = true;
    for (int i = 0; i < 500; ++i) {
        const auto pred = dp.predictive();
        const double denom = 5000.0 + static_cast<double>(dp.draws());
        for (std::size_t l = 0; l < dp.distinct(); ++l) {
            exact = exact && pred[l] == static_cast<double>(dp.counts()[l]) / denom;
        }
        dp.next(r);
    }
    o.require(exact, "sigma=0 repeat probability not c_l/(lambda+i)");
    o.note("P(Z=1)=" + fmt("%.5f", phat) + " vs " + fmt("%.5f", p) + ", PYP sum error " + fmt("%.2g", worst));
    return o;
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {1, "worked numbers", 1, c1_worked_numbers},
        {2, "oracle equivalence", 30, c2_oracle_equivalence},
        {3, "two-symbol consistency", 5, c3_two_symbol},
        {4, "delta solver", 60, c4_delta_solver},
        {5, "shift-gap strictness", 10, c5_shift_strictness},
        {6, "sketch correctness", 120, c6_sketch_correctness},
        {7, "classical bound coverage", 120, c7_classical_bound},
        {8, "conformal coverage", 600, c8_conformal_coverage},
        {9, "collapse identities", 60, c9_collapse},
        {10, "shift robustness", 300, c10_shift},
        {11, "generators", 60, c11_generators},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s) {
            o.pass = false;
            o.note("over runtime budget");
        }
        failed += !o.pass;
        std::printf("%s %2d %s (%.2fs / %.0fs): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
    return failed ? 1 : 0;
}
