#include "confsketch/generators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "confsketch/errors.hpp"

namespace confsketch {
namespace {

// Direct summation horizon for zeta; the Euler-Maclaurin remainder there is
// far below double precision for every s > 1.
constexpr std::uint64_t kZetaHead = 1000;
constexpr double kTwo63 = 9223372036854775808.0;

// sum_{z > n} z^-s via Euler-Maclaurin, accurate for n >= kZetaHead.
double zeta_tail(double s, double n) {
    const double ns = std::pow(n, -s);
    return n * ns / (s - 1.0) - ns / 2.0 + s * ns / (12.0 * n) -
           s * (s + 1.0) * (s + 2.0) * ns / (720.0 * n * n * n);
}

} // namespace

double riemann_zeta(double s) {
    if (!(s > 1.0)) {
        throw DomainError("zeta(s) diverges for s <= 1");
    }
    double sum = 0.0;
    // Smallest terms first.
    for (std::uint64_t z = kZetaHead; z >= 1; --z) {
        sum += std::pow(static_cast<double>(z), -s);
    }
    return sum + zeta_tail(s, static_cast<double>(kZetaHead));
}

ZipfSource::ZipfSource(double a, std::size_t max_table) : a_(a) {
    if (!(a > 1.0) || !std::isfinite(a)) {
        throw ConfigError("Zipf exponent must exceed 1, got " + std::to_string(a));
    }
    if (max_table == 0) {
        throw ConfigError("Zipf table needs at least one entry");
    }
    zeta_ = riemann_zeta(a);
    double head = 0.0;
    double compensation = 0.0;
    double tail = zeta_;
    std::vector<double> partial;
    while (partial.size() < max_table) {
        const auto z = static_cast<double>(partial.size() + 1);
        // Kahan summation keeps the cdf accurate over a million terms.
        const double term = std::pow(z, -a) - compensation;
        const double next = head + term;
        compensation = (next - head) - term;
        head = next;
        partial.push_back(head);
        tail = partial.size() >= kZetaHead ? zeta_tail(a, z) : zeta_ - head;
        if (tail < kTailTolerance * zeta_) {
            break;
        }
    }
    tail_mass_ = std::max(0.0, tail / zeta_);
    cdf_.resize(partial.size());
    for (std::size_t i = 0; i < partial.size(); ++i) {
        cdf_[i] = partial[i] / head;
    }
    cdf_.back() = 1.0;
}

double ZipfSource::pmf(std::uint64_t z) const {
    if (z == 0) {
        return 0.0;
    }
    return std::pow(static_cast<double>(z), -a_) / zeta_;
}

std::uint64_t ZipfSource::sample(Rng& rng) const {
    if (tail_mass_ > 0.0 && rng.uniform01() < tail_mass_) {
        return sample_tail(rng);
    }
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(), cdf_.size() - 1)) + 1;
}

std::uint64_t ZipfSource::sample_tail(Rng& rng) const {
    // Envelope: floor(Y) with Y ~ density y^-a on [n, inf), n = table size + 1.
    // Acceptance ratio z^-a / int_z^{z+1} y^-a dy, normalized by its value bound at z = n.
    const double n = static_cast<double>(cdf_.size() + 1);
    const double bound = std::pow(1.0 + 1.0 / n, a_);
    const double shape = 1.0 / (a_ - 1.0);
    for (;;) {
        const double u = 1.0 - rng.uniform01();
        const double y = n * std::pow(u, -shape);
        if (!(y < kTwo63)) {
            continue;
        }
        const double z = std::floor(y);
        const double ratio = (a_ - 1.0) / (z * -std::expm1((1.0 - a_) * std::log1p(1.0 / z)));
        if (rng.uniform01() * bound <= ratio) {
            return static_cast<std::uint64_t>(z);
        }
    }
}

std::string zipf_token(std::uint64_t z) { return std::to_string(z); }

PitmanYorSource::PitmanYorSource(double lambda, double sigma) : lambda_(lambda), sigma_(sigma) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("Pitman-Yor concentration must be positive");
    }
    if (!(sigma >= 0.0 && sigma < 1.0)) {
        throw ConfigError("Pitman-Yor discount must lie in [0, 1)");
    }
}

double PitmanYorSource::new_value_probability() const noexcept {
    const auto i = static_cast<double>(history_.size());
    const auto k = static_cast<double>(counts_.size());
    return (lambda_ + k * sigma_) / (lambda_ + i);
}

std::vector<double> PitmanYorSource::predictive() const {
    const double denom = lambda_ + static_cast<double>(history_.size());
    std::vector<double> p;
    p.reserve(counts_.size() + 1);
    for (const auto c : counts_) {
        p.push_back((static_cast<double>(c) - sigma_) / denom);
    }
    p.push_back(new_value_probability());
    return p;
}

// Picks atom l with probability proportional to c_l - sigma: a uniform past
// draw (proportional to c_l), kept with probability 1 - sigma / c_l.
std::uint64_t PitmanYorSource::draw_existing(Rng& rng) const {
    for (;;) {
        const auto l = history_[rng.uniform_index(history_.size())];
        if (sigma_ == 0.0 || rng.uniform01() * static_cast<double>(counts_[l]) >= sigma_) {
            return l;
        }
    }
}

std::uint64_t PitmanYorSource::next(Rng& rng) {
    const double total = lambda_ + static_cast<double>(history_.size());
    const double fresh = lambda_ + static_cast<double>(counts_.size()) * sigma_;
    std::uint64_t l;
    if (history_.empty() || rng.uniform01() * total < fresh) {
        l = counts_.size();
        counts_.push_back(0);
        atom_ids_.push_back(next_id_++);
    } else {
        l = draw_existing(rng);
    }
    ++counts_[l];
    history_.push_back(l);
    return atom_ids_[l];
}

std::uint64_t PitmanYorSource::peek(Rng& rng) {
    const double total = lambda_ + static_cast<double>(history_.size());
    const double fresh = lambda_ + static_cast<double>(counts_.size()) * sigma_;
    if (history_.empty() || rng.uniform01() * total < fresh) {
        return next_id_++;
    }
    return atom_ids_[draw_existing(rng)];
}

std::string pitman_yor_token(std::uint64_t id) { return std::to_string(id); }

ShiftMixture::ShiftMixture(Base base, double pi) : base_(std::move(base)), pi_(pi) {
    if (!(pi >= 0.0 && pi <= 1.0)) {
        throw ConfigError("shift proportion must lie in [0, 1]");
    }
}

ShiftMixture::Draw ShiftMixture::sample(Rng& rng) const {
    if (rng.bernoulli(pi_)) {
        return {novel_token(rng.next_u64()), true};
    }
    return {base_(rng), false};
}

std::string novel_token(std::uint64_t bits) {
    char buf[18];
    std::snprintf(buf, sizeof buf, "u%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

} // namespace confsketch
