#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "confsketch/random.hpp"

namespace confsketch {

/// Zeta-normalized Zipf law P(Z = z) = z^-a / zeta(a) on z = 1, 2, ...
///
/// Values inside the table come from an inverse-cdf table; larger values are
/// drawn exactly by rejection from a continuous power-law envelope. Draws at
/// or above 2^63 are rejected, so the support is truncated there (this only
/// matters for a close to 1).
class ZipfSource {
public:
    static constexpr std::size_t kDefaultMaxTable = std::size_t{1} << 20;
    static constexpr double kTailTolerance = 1e-12;

    /// Table grows until the mass beyond it is below 1e-12 or `max_table`
    /// entries are reached. Throws ConfigError for a <= 1 or max_table == 0.
    explicit ZipfSource(double a, std::size_t max_table = kDefaultMaxTable);

    double exponent() const noexcept { return a_; }
    double zeta() const noexcept { return zeta_; }
    std::size_t table_size() const noexcept { return cdf_.size(); }
    /// Probability of landing beyond the table.
    double tail_mass() const noexcept { return tail_mass_; }
    double pmf(std::uint64_t z) const;

    std::uint64_t sample(Rng& rng) const;

private:
    std::uint64_t sample_tail(Rng& rng) const;

    double a_;
    double zeta_;
    double tail_mass_;
    std::vector<double> cdf_; ///< conditional on landing in the table
};

/// Riemann zeta for s > 1 by Euler-Maclaurin summation.
double riemann_zeta(double s);

std::string zipf_token(std::uint64_t z);

/// Sequential Pitman-Yor predictive sampler. New atoms are consecutive ids
/// 0, 1, 2, ... in order of creation.
class PitmanYorSource {
public:
    /// Throws ConfigError unless lambda > 0 and sigma in [0, 1).
    PitmanYorSource(double lambda, double sigma);

    double lambda() const noexcept { return lambda_; }
    double sigma() const noexcept { return sigma_; }
    std::uint64_t draws() const noexcept { return history_.size(); }
    std::size_t distinct() const noexcept { return counts_.size(); }
    std::span<const std::uint64_t> counts() const noexcept { return counts_; }

    /// (lambda + k sigma) / (lambda + i).
    double new_value_probability() const noexcept;
    /// Existing-atom probabilities (c_l - sigma) / (lambda + i), then the new-value probability last.
    std::vector<double> predictive() const;

    /// Draws Z_{i+1} and updates the state.
    std::uint64_t next(Rng& rng);
    /// Draws from the current predictive without updating it. A new atom gets
    /// a fresh id that later next()/peek() calls never reuse.
    std::uint64_t peek(Rng& rng);

private:
    std::uint64_t draw_existing(Rng& rng) const;

    double lambda_;
    double sigma_;
    std::vector<std::uint64_t> counts_;
    std::vector<std::uint64_t> atom_ids_; ///< id of each atom, parallel to counts_
    std::vector<std::uint64_t> history_;  ///< atom index of each draw
    std::uint64_t next_id_ = 0;
};

std::string pitman_yor_token(std::uint64_t id);

/// Query stream that replaces a fraction pi of base queries with fresh,
/// almost surely unseen tokens ("u" + 16 hex digits of a uniform 64-bit draw).
class ShiftMixture {
public:
    using Base = std::function<std::string(Rng&)>;

    struct Draw {
        std::string token;
        bool novel;
    };

    /// Throws ConfigError for pi outside [0, 1].
    ShiftMixture(Base base, double pi);

    double pi() const noexcept { return pi_; }
    Draw sample(Rng& rng) const;

private:
    Base base_;
    double pi_;
};

std::string novel_token(std::uint64_t bits);

} // namespace confsketch
