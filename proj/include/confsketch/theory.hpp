#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "confsketch/random.hpp"

namespace confsketch::theory {

/// Finite distribution sum_j p_j delta_{a_j}. Subsets of atoms are bitmasks
/// over atom indices, so K is capped at 63.
class DiscreteDist {
public:
    static constexpr std::size_t kMaxAtoms = 63;

    /// Labels default to "a1", "a2", ... Throws DomainError unless all
    /// p_j > 0 and they sum to 1 within 1e-12.
    explicit DiscreteDist(std::vector<double> probabilities, std::vector<std::string> labels = {});

    std::size_t size() const noexcept { return p_.size(); }
    double p(std::size_t j) const { return p_.at(j); }
    std::span<const double> probabilities() const noexcept { return p_; }
    const std::string& label(std::size_t j) const { return labels_.at(j); }

    /// Inverse-cdf draw of an atom index.
    std::size_t sample(Rng& rng) const;

private:
    std::vector<double> p_;
    std::vector<double> cdf_;
    std::vector<std::string> labels_;
};

/// Two-atom distribution (p, 1 - p).
DiscreteDist two_symbol(double p);

using AtomSet = std::uint64_t;

AtomSet atom_set(std::span<const std::size_t> atoms);

/// Law of the set of distinct values of an i.i.d. M-sample.
struct UniquesPmf {
    std::size_t sample_size = 0;
    std::size_t atoms = 0;
    std::map<AtomSet, double> mass;

    double at(AtomSet set) const;
    double total() const;
};

/// P(V = J) by summing multinomial weights over the C(M-1, k-1)
/// compositions of M into k positive parts. Zero when k > M.
double uniques_set_pmf(const DiscreteDist& dist, AtomSet set, std::size_t M);

/// Same probability by inclusion-exclusion over the subsets of J.
double uniques_set_pmf_ie(const DiscreteDist& dist, AtomSet set, std::size_t M);

/// Probability that a uniform draw from the distinct values of an M-sample
/// is atom j. Exact, by enumerating subsets containing j; throws CapacityError
/// past kElementWorkCap evaluation steps (use the Monte-Carlo estimator).
inline constexpr double kElementWorkCap = 1e8;
double uniques_element_pmf(const DiscreteDist& dist, std::size_t j, std::size_t M);

struct MonteCarloEstimate {
    double estimate;
    double standard_error;
};

MonteCarloEstimate uniques_element_pmf_mc(const DiscreteDist& dist, std::size_t j, std::size_t M,
                                          std::size_t samples, Rng& rng);

/// Enumerates all K^M sequences. Throws CapacityError when K^M > 1e7.
inline constexpr double kBruteForceCap = 1e7;
UniquesPmf brute_force_uniques(const DiscreteDist& dist, std::size_t M);

/// Element law induced by a set law: each member of V gets mass 1/|V|.
double element_pmf_from_sets(const UniquesPmf& sets, std::size_t j);

/// Two-atom uniques law at M: (1 + p^M - (1 - p)^M) / 2.
double two_symbol_uniques(double p, std::size_t M);

/// p (2p^2 - 3p + 3) / 2. DomainError outside [0, 1].
double tau(double p);

double h(double delta, double M, double M_prime);

/// Root of h(delta) = ln(M'/M) on [0, 1], bisected to width 1e-12.
/// Arguments are ordered internally and M' < 2 is read as 2.
double delta_star(std::size_t M, std::size_t M_prime);

/// Worst two-atom total-variation gap between uniques laws at M and M'.
double delta_two(std::size_t M, std::size_t M_prime);

/// a^(-1/(a-1)) (1 - 1/a). DomainError for a <= 1.
double nu(double a);

/// max(0, 1 - alpha - 2 nu(a) - 1/M).
double robust_coverage_bound(double alpha, double a, std::size_t M);

/// Root in (0, 1/2) of c^(M-1) + (1-c)^(M-1) = 2/M. DomainError for M < 3.
double solve_c(std::size_t M);

struct ShiftGap {
    double tv_uniques;
    double tv_base;
};

/// TV distances between two two-atom laws and between their uniques laws.
/// Both laws must have every atom strictly inside (c, 1 - c), c = solve_c(M);
/// DomainError otherwise.
ShiftGap shift_gap_two(const DiscreteDist& P, const DiscreteDist& P_prime, std::size_t M);

} // namespace confsketch::theory
