#include "confsketch/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "confsketch/errors.hpp"

namespace confsketch::theory {
namespace {

constexpr double kBisectWidth = 1e-12;

std::size_t popcount(AtomSet s) { return static_cast<std::size_t>(std::popcount(s)); }

double binomial(std::size_t n, std::size_t k) {
    if (k > n) {
        return 0.0;
    }
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return r;
}

void check_set(const DiscreteDist& dist, AtomSet set) {
    if (set == 0) {
        throw DomainError("unique set must be non-empty");
    }
    if (dist.size() < 64 && (set >> dist.size()) != 0) {
        throw DomainError("unique set names atoms outside the distribution");
    }
}

std::vector<std::size_t> members(AtomSet set) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; set != 0; ++j, set >>= 1) {
        if (set & 1U) {
            out.push_back(j);
        }
    }
    return out;
}

// sum over compositions c of `left` into parts.size() - i positive parts of
// prod p^c / c!, for the atoms parts[i..].
double composition_sum(std::span<const double> parts, std::size_t i, std::size_t left) {
    const std::size_t remaining = parts.size() - i;
    if (remaining == 1) {
        return std::pow(parts[i], static_cast<double>(left)) / std::tgamma(static_cast<double>(left) + 1.0);
    }
    double sum = 0.0;
    double term = 1.0; // p^c / c!
    for (std::size_t c = 1; c + (remaining - 1) <= left; ++c) {
        term *= parts[i] / static_cast<double>(c);
        sum += term * composition_sum(parts, i + 1, left - c);
    }
    return sum;
}

double set_pmf_compositions(const DiscreteDist& dist, AtomSet set, std::size_t M) {
    std::vector<double> parts;
    for (const auto j : members(set)) {
        parts.push_back(dist.p(j));
    }
    return std::tgamma(static_cast<double>(M) + 1.0) * composition_sum(parts, 0, M);
}

double set_pmf_ie(const DiscreteDist& dist, AtomSet set, std::size_t M) {
    const auto idx = members(set);
    const std::size_t k = idx.size();
    double sum = 0.0;
    for (std::uint64_t sub = 0; sub < (std::uint64_t{1} << k); ++sub) {
        double mass = 0.0;
        for (std::size_t b = 0; b < k; ++b) {
            if ((sub >> b) & 1U) {
                mass += dist.p(idx[b]);
            }
        }
        const double sign = ((k - popcount(sub)) % 2 == 0) ? 1.0 : -1.0;
        sum += sign * std::pow(mass, static_cast<double>(M));
    }
    return sum;
}

// Cheaper of the two exact forms: C(M-1, k-1) compositions versus 2^k terms.
double set_pmf_cost(std::size_t k, std::size_t M) {
    return std::min(binomial(M - 1, k - 1), std::ldexp(1.0, static_cast<int>(k)));
}

} // namespace

DiscreteDist::DiscreteDist(std::vector<double> probabilities, std::vector<std::string> labels)
    : p_(std::move(probabilities)), labels_(std::move(labels)) {
    if (p_.empty() || p_.size() > kMaxAtoms) {
        throw DomainError("distribution needs between 1 and 63 atoms");
    }
    double total = 0.0;
    for (const double p : p_) {
        if (!(p > 0.0) || !std::isfinite(p)) {
            throw DomainError("atom probabilities must be positive");
        }
        total += p;
        cdf_.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw DomainError("atom probabilities must sum to 1");
    }
    cdf_.back() = 1.0;
    if (labels_.empty()) {
        for (std::size_t j = 0; j < p_.size(); ++j) {
            labels_.push_back("a" + std::to_string(j + 1));
        }
    } else if (labels_.size() != p_.size()) {
        throw DomainError("one label per atom required");
    }
}

std::size_t DiscreteDist::sample(Rng& rng) const {
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), p_.size() - 1);
}

DiscreteDist two_symbol(double p) { return DiscreteDist({p, 1.0 - p}); }

AtomSet atom_set(std::span<const std::size_t> atoms) {
    AtomSet s = 0;
    for (const auto j : atoms) {
        if (j >= DiscreteDist::kMaxAtoms) {
            throw DomainError("atom index out of range");
        }
        s |= AtomSet{1} << j;
    }
    return s;
}

double UniquesPmf::at(AtomSet set) const {
    const auto it = mass.find(set);
    return it == mass.end() ? 0.0 : it->second;
}

double UniquesPmf::total() const {
    double t = 0.0;
    for (const auto& [set, p] : mass) {
        t += p;
    }
    return t;
}

double uniques_set_pmf(const DiscreteDist& dist, AtomSet set, std::size_t M) {
    check_set(dist, set);
    const std::size_t k = popcount(set);
    if (k > M) {
        return 0.0;
    }
    if (binomial(M - 1, k - 1) > kBruteForceCap) {
        throw CapacityError("too many compositions; use uniques_set_pmf_ie");
    }
    return set_pmf_compositions(dist, set, M);
}

double uniques_set_pmf_ie(const DiscreteDist& dist, AtomSet set, std::size_t M) {
    check_set(dist, set);
    const std::size_t k = popcount(set);
    if (k > M) {
        return 0.0;
    }
    if (k > 24) {
        throw CapacityError("inclusion-exclusion over more than 2^24 subsets");
    }
    return set_pmf_ie(dist, set, M);
}

double uniques_element_pmf(const DiscreteDist& dist, std::size_t j, std::size_t M) {
    if (M == 0) {
        throw DomainError("sample size must be at least 1");
    }
    const std::size_t K = dist.size();
    if (j >= K) {
        throw DomainError("atom index out of range");
    }
    const std::size_t kmax = std::min(K, M);
    double work = 0.0;
    for (std::size_t k = 1; k <= kmax; ++k) {
        work += binomial(K - 1, k - 1) * set_pmf_cost(k, M);
    }
    if (work > kElementWorkCap) {
        throw CapacityError("exact uniques law too costly; use uniques_element_pmf_mc");
    }
    // Enumerate subsets of the other atoms and add j.
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < K; ++i) {
        if (i != j) {
            others.push_back(i);
        }
    }
    double sum = 0.0;
    for (std::uint64_t sub = 0; sub < (std::uint64_t{1} << others.size()); ++sub) {
        const std::size_t k = popcount(sub) + 1;
        if (k > M) {
            continue;
        }
        AtomSet set = AtomSet{1} << j;
        for (std::size_t b = 0; b < others.size(); ++b) {
            if ((sub >> b) & 1U) {
                set |= AtomSet{1} << others[b];
            }
        }
        const double p = binomial(M - 1, k - 1) <= std::ldexp(1.0, static_cast<int>(k))
                             ? set_pmf_compositions(dist, set, M)
                             : set_pmf_ie(dist, set, M);
        sum += p / static_cast<double>(k);
    }
    return sum;
}

MonteCarloEstimate uniques_element_pmf_mc(const DiscreteDist& dist, std::size_t j, std::size_t M,
                                          std::size_t samples, Rng& rng) {
    if (M == 0 || samples < 2) {
        throw DomainError("Monte-Carlo estimate needs M >= 1 and at least 2 samples");
    }
    if (j >= dist.size()) {
        throw DomainError("atom index out of range");
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        AtomSet seen = 0;
        for (std::size_t i = 0; i < M; ++i) {
            seen |= AtomSet{1} << dist.sample(rng);
        }
        const double x = ((seen >> j) & 1U) ? 1.0 / static_cast<double>(popcount(seen)) : 0.0;
        sum += x;
        sum_sq += x * x;
    }
    const auto n = static_cast<double>(samples);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

UniquesPmf brute_force_uniques(const DiscreteDist& dist, std::size_t M) {
    const std::size_t K = dist.size();
    if (M == 0) {
        throw DomainError("sample size must be at least 1");
    }
    if (std::pow(static_cast<double>(K), static_cast<double>(M)) > kBruteForceCap) {
        throw CapacityError("K^M exceeds the brute-force enumeration cap");
    }
    UniquesPmf out{M, K, {}};
    // Depth-first over sequences, carrying the running weight and unique set.
    auto walk = [&](auto&& self, std::size_t depth, double weight, AtomSet seen) -> void {
        if (depth == M) {
            out.mass[seen] += weight;
            return;
        }
        for (std::size_t a = 0; a < K; ++a) {
            self(self, depth + 1, weight * dist.p(a), seen | (AtomSet{1} << a));
        }
    };
    walk(walk, 0, 1.0, 0);
    return out;
}

double element_pmf_from_sets(const UniquesPmf& sets, std::size_t j) {
    double sum = 0.0;
    for (const auto& [set, p] : sets.mass) {
        if ((set >> j) & 1U) {
            sum += p / static_cast<double>(popcount(set));
        }
    }
    return sum;
}

double two_symbol_uniques(double p, std::size_t M) {
    const auto m = static_cast<double>(M);
    return (1.0 + std::pow(p, m) - std::pow(1.0 - p, m)) / 2.0;
}

double tau(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("tau needs p in [0, 1]");
    }
    return p * (2.0 * p * p - 3.0 * p + 3.0) / 2.0;
}

double h(double delta, double M, double M_prime) {
    return std::log((1.0 + std::pow(delta, M - 1.0)) / (1.0 + std::pow(delta, M_prime - 1.0))) -
           (M - M_prime) * std::log1p(delta);
}

namespace {

struct OrderedPair {
    double big;
    double small;
};

OrderedPair order_sizes(std::size_t M, std::size_t M_prime) {
    // Sample sizes 1 and 2 give the same uniques law.
    const auto a = static_cast<double>(std::max<std::size_t>(M, 2));
    const auto b = static_cast<double>(std::max<std::size_t>(M_prime, 2));
    return {std::max(a, b), std::min(a, b)};
}

// (1 - d^M) / (1 + d)^M in log space for large M.
double gap_term(double d, double M) { return -std::expm1(M * std::log(d)) * std::exp(-M * std::log1p(d)); }

} // namespace

double delta_star(std::size_t M, std::size_t M_prime) {
    const auto [big, small] = order_sizes(M, M_prime);
    if (big == small) {
        return 0.0;
    }
    const double target = std::log(small / big);
    auto g = [&](double d) { return h(d, big, small) - target; };
    double lo = 0.0;
    double hi = 1.0;
    if (!(g(lo) > 0.0 && g(hi) < 0.0)) {
        throw InvariantError("h(delta) - ln(M'/M) does not change sign on [0, 1]");
    }
    while (hi - lo >= kBisectWidth) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double delta_two(std::size_t M, std::size_t M_prime) {
    const auto [big, small] = order_sizes(M, M_prime);
    if (big == small) {
        return 0.0;
    }
    const double d = delta_star(M, M_prime);
    if (d == 0.0) {
        return 0.0;
    }
    return 0.5 * std::abs(gap_term(d, big) - gap_term(d, small));
}

double nu(double a) {
    if (!(a > 1.0)) {
        throw DomainError("nu needs a > 1");
    }
    return std::pow(a, -1.0 / (a - 1.0)) * (1.0 - 1.0 / a);
}

double robust_coverage_bound(double alpha, double a, std::size_t M) {
    if (M == 0) {
        throw DomainError("test size must be at least 1");
    }
    return std::max(0.0, 1.0 - alpha - 2.0 * nu(a) - 1.0 / static_cast<double>(M));
}

double solve_c(std::size_t M) {
    if (M < 3) {
        throw DomainError("solve_c needs M >= 3");
    }
    const auto e = static_cast<double>(M - 1);
    const double target = 2.0 / static_cast<double>(M);
    // Left side falls from 1 at c = 0 to 2^(2-M) at c = 1/2.
    auto f = [&](double c) { return std::pow(c, e) + std::pow(1.0 - c, e) - target; };
    double lo = 0.0;
    double hi = 0.5;
    while (hi - lo >= kBisectWidth) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ShiftGap shift_gap_two(const DiscreteDist& P, const DiscreteDist& P_prime, std::size_t M) {
    if (P.size() != 2 || P_prime.size() != 2) {
        throw DomainError("shift_gap_two needs two-atom distributions");
    }
    const double c = solve_c(M);
    for (const auto* dist : {&P, &P_prime}) {
        for (const double p : dist->probabilities()) {
            if (!(p > c)) {
                throw DomainError("atom probability " + std::to_string(p) + " not above c = " + std::to_string(c));
            }
            if (!(p < 1.0 - c)) {
                throw DomainError("atom probability " + std::to_string(p) + " not below 1 - c = " +
                                  std::to_string(1.0 - c));
            }
        }
    }
    const double p = P.p(0);
    const double q = P_prime.p(0);
    return {std::abs(two_symbol_uniques(p, M) - two_symbol_uniques(q, M)), std::abs(p - q)};
}

} // namespace confsketch::theory
