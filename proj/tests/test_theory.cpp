#include <doctest.h>

#include <cmath>
#include <vector>

#include "confsketch/errors.hpp"
#include "confsketch/theory.hpp"

using namespace confsketch;
using namespace confsketch::theory;

namespace {

AtomSet S(std::initializer_list<std::size_t> atoms) {
    const std::vector<std::size_t> v(atoms);
    return atom_set(v);
}

// All distributions on K atoms with probabilities from {1,2,...}/den.
std::vector<DiscreteDist> grid_dists(std::size_t K, int den) {
    std::vector<DiscreteDist> out;
    std::vector<int> parts(K, 1);
    auto rec = [&](auto&& self, std::size_t i, int left) -> void {
        if (i + 1 == K) {
            parts[i] = left;
            std::vector<double> p;
            for (const int x : parts) {
                p.push_back(static_cast<double>(x) / den);
            }
            // Renormalize exactly representable sums.
            double t = 0.0;
            for (const double x : p) {
                t += x;
            }
            p.back() += 1.0 - t;
            out.emplace_back(p);
            return;
        }
        for (int x = 1; x + static_cast<int>(K - i - 1) <= left; ++x) {
            parts[i] = x;
            self(self, i + 1, left - x);
        }
    };
    rec(rec, 0, den);
    return out;
}

// Grid oracle for the two-atom worst case: (1/2) max_p |p^M - (1-p)^M - p^M' + (1-p)^M'|.
double delta_grid(double M, double Mp, double step) {
    double best = 0.0;
    const auto n = static_cast<long>(std::llround(1.0 / step));
    for (long i = 0; i <= n; ++i) {
        const double p = static_cast<double>(i) / static_cast<double>(n);
        const double v = std::abs(std::pow(p, M) - std::pow(1 - p, M) - std::pow(p, Mp) + std::pow(1 - p, Mp));
        best = std::max(best, v);
    }
    return 0.5 * best;
}

} // namespace

TEST_CASE("discrete distribution validation") {
    CHECK_THROWS_AS(DiscreteDist({0.5, 0.4}), DomainError);
    CHECK_THROWS_AS(DiscreteDist({1.0, 0.0}), DomainError);
    CHECK_THROWS_AS(DiscreteDist({}), DomainError);
    const DiscreteDist d({0.25, 0.75}, {"x", "y"});
    CHECK(d.label(1) == "y");
    CHECK(two_symbol(0.3).p(1) == doctest::Approx(0.7));
}

TEST_CASE("set pmf worked values") {
    const auto d = two_symbol(0.3);
    CHECK(uniques_set_pmf(d, S({0}), 2) == doctest::Approx(0.09));
    CHECK(uniques_set_pmf(d, S({1}), 2) == doctest::Approx(0.49));
    CHECK(uniques_set_pmf(d, S({0, 1}), 2) == doctest::Approx(0.42));
    CHECK(uniques_set_pmf(d, S({0}), 2) + uniques_set_pmf(d, S({1}), 2) + uniques_set_pmf(d, S({0, 1}), 2) ==
          doctest::Approx(1.0).epsilon(1e-14));
    CHECK(uniques_set_pmf_ie(d, S({0, 1}), 2) == doctest::Approx(0.42).epsilon(1e-14));
    // Two-atom M = 2 set: 2 p1 p2.
    const DiscreteDist k3({0.2, 0.3, 0.5});
    CHECK(uniques_set_pmf(k3, S({0, 2}), 2) == doctest::Approx(2 * 0.2 * 0.5));
    CHECK(uniques_set_pmf(k3, S({1}), 2) == doctest::Approx(0.09));
    // k > M is impossible.
    CHECK(uniques_set_pmf(k3, S({0, 1, 2}), 2) == 0.0);
    CHECK(uniques_set_pmf_ie(k3, S({0, 1, 2}), 2) == 0.0);
    CHECK_THROWS_AS(uniques_set_pmf(k3, 0, 2), DomainError);
    CHECK_THROWS_AS(uniques_set_pmf(k3, S({5}), 2), DomainError);
}

TEST_CASE("singletons give p^M") {
    const DiscreteDist d({0.1, 0.2, 0.3, 0.4});
    for (std::size_t M = 1; M <= 8; ++M) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(uniques_set_pmf_ie(d, S({j}), M) == doctest::Approx(std::pow(d.p(j), M)).epsilon(1e-14));
            CHECK(uniques_set_pmf(d, S({j}), M) == doctest::Approx(std::pow(d.p(j), M)).epsilon(1e-14));
        }
    }
}

TEST_CASE("composition, inclusion-exclusion and brute force agree") {
    double worst = 0.0;
    for (std::size_t K = 1; K <= 4; ++K) {
        for (const auto& d : grid_dists(K, 10)) {
            for (std::size_t M = 1; M <= 5; ++M) {
                const auto bf = brute_force_uniques(d, M);
                CHECK(std::abs(bf.total() - 1.0) < 1e-10);
                for (AtomSet s = 1; s < (AtomSet{1} << K); ++s) {
                    const double a = uniques_set_pmf(d, s, M);
                    const double b = uniques_set_pmf_ie(d, s, M);
                    worst = std::max({worst, std::abs(a - b), std::abs(a - bf.at(s))});
                }
            }
        }
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("brute force worked example") {
    const auto bf = brute_force_uniques(two_symbol(0.5), 3);
    CHECK(bf.at(S({0})) == doctest::Approx(0.125));
    CHECK(bf.at(S({1})) == doctest::Approx(0.125));
    CHECK(bf.at(S({0, 1})) == doctest::Approx(0.75));
    CHECK(bf.mass.size() == 3);
    CHECK_THROWS_AS(brute_force_uniques(DiscreteDist(std::vector<double>(10, 0.1)), 8), CapacityError);
}

TEST_CASE("element pmf: small M equals P and matches brute force") {
    for (const auto& d : grid_dists(3, 10)) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(uniques_element_pmf(d, j, 1) == doctest::Approx(d.p(j)).epsilon(1e-14));
            CHECK(std::abs(uniques_element_pmf(d, j, 2) - d.p(j)) < 1e-12);
        }
        for (std::size_t M = 1; M <= 5; ++M) {
            const auto bf = brute_force_uniques(d, M);
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(std::abs(uniques_element_pmf(d, j, M) - element_pmf_from_sets(bf, j)) < 1e-12);
            }
        }
    }
}

TEST_CASE("two-symbol closed form equals general enumeration") {
    double worst = 0.0;
    for (int i = 1; i <= 99; ++i) {
        const double p = i / 100.0;
        const auto d = two_symbol(p);
        for (std::size_t M = 1; M <= 10; ++M) {
            worst = std::max(worst, std::abs(uniques_element_pmf(d, 0, M) - two_symbol_uniques(p, M)));
        }
        worst = std::max(worst, std::abs(tau(p) - two_symbol_uniques(p, 3)));
    }
    CHECK(worst < 1e-12);
    CHECK(two_symbol_uniques(0.9, 3) == doctest::Approx(0.864));
    CHECK(tau(0.9) == doctest::Approx(0.864));
}

TEST_CASE("element pmf capacity gate and Monte-Carlo estimator") {
    const DiscreteDist big(std::vector<double>(40, 1.0 / 40));
    CHECK_THROWS_AS(uniques_element_pmf(big, 0, 30), CapacityError);

    const DiscreteDist d({0.6, 0.3, 0.1});
    Rng rng(99);
    for (const std::size_t M : {3, 5}) {
        for (std::size_t j = 0; j < 3; ++j) {
            const auto est = uniques_element_pmf_mc(d, j, M, 1000000, rng);
            CHECK(std::abs(est.estimate - uniques_element_pmf(d, j, M)) < 3 * est.standard_error);
        }
    }
}

TEST_CASE("tau") {
    CHECK(tau(0.0) == 0.0);
    CHECK(tau(1.0) == 1.0);
    CHECK(tau(0.5) == 0.5);
    // tau(p) - p = p (2p - 1)(p - 1) / 2: the uniques law favors the rarer atom,
    // so tau lies above the diagonal on (0, 1/2) and below it on (1/2, 1).
    for (int i = 1; i < 10000; ++i) {
        const double p = i / 10000.0;
        if (p < 0.5) {
            CHECK(tau(p) > p);
        } else if (p > 0.5) {
            CHECK(tau(p) < p);
        }
        CHECK(tau(p) - p == doctest::Approx(p * (2 * p - 1) * (p - 1) / 2).epsilon(1e-9));
    }
    // Brute-force check of the direction at p = 0.1.
    CHECK(element_pmf_from_sets(brute_force_uniques(two_symbol(0.1), 3), 0) > 0.1);
    CHECK_THROWS_AS(tau(-0.1), DomainError);
    CHECK_THROWS_AS(tau(1.1), DomainError);
}

TEST_CASE("h") {
    CHECK(h(0.0, 5, 3) == 0.0);
    CHECK(h(1.0, 5, 3) == doctest::Approx(-2 * std::log(2.0)));
    for (const auto& [M, Mp] : {std::pair{5.0, 3.0}, {10.0, 2.0}, {50.0, 25.0}}) {
        double prev = h(0.0, M, Mp);
        for (int i = 1; i < 1000; ++i) {
            const double cur = h(i / 1000.0, M, Mp);
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("delta solver") {
    CHECK(delta_two(7, 7) == 0.0);
    CHECK(delta_two(2, 1) == 0.0);
    CHECK(delta_two(3, 5) == delta_two(5, 3));
    CHECK(delta_two(5, 1) == delta_two(5, 2));
    for (const auto& [M, Mp] : {std::pair<std::size_t, std::size_t>{3, 2}, {5, 3}, {10, 4}, {50, 25}}) {
        CHECK(std::abs(delta_two(M, Mp) - delta_grid(M, Mp, 1e-6)) < 1e-9);
        // The root brackets a single sign change of h - ln(M'/M).
        const double d = delta_star(M, Mp);
        const double target = std::log(static_cast<double>(Mp) / M);
        CHECK(h(d - 1e-6, M, Mp) > target);
        CHECK(h(d + 1e-6, M, Mp) < target);
    }
    // Delta = A(delta*) / 2 and A(delta*) -> nu(a), so 2 Delta / nu(a) -> 1 at rate 1/M.
    for (const std::size_t M : {100, 1000}) {
        CHECK(std::abs(2 * delta_two(M, M / 2) / nu(2.0) - 1.0) <= 10.0 / M);
    }
    CHECK(std::abs(2 * delta_two(900, 300) / nu(3.0) - 1.0) <= 10.0 / 900);
    // Independent check of the limit: max over x of e^-x - e^-ax is nu(a).
    double best = 0.0;
    for (int i = 1; i < 200000; ++i) {
        const double x = i * 1e-4;
        best = std::max(best, std::exp(-x) - std::exp(-3.0 * x));
    }
    CHECK(best == doctest::Approx(nu(3.0)).epsilon(1e-8));
}

TEST_CASE("nu and the robust coverage bound") {
    CHECK(nu(2.0) == doctest::Approx(0.25));
    CHECK(nu(1.2) == doctest::Approx(0.067).epsilon(0.005 / 0.067));
    CHECK(std::abs(nu(1.2) - 0.067) < 1e-3);
    CHECK(std::abs(nu(1.1) - 0.035) < 1e-3);
    CHECK_THROWS_AS(nu(1.0), DomainError);
    CHECK(std::abs(robust_coverage_bound(0.05, 1.2, 100) - 0.806) < 1e-3);
    CHECK(std::abs(robust_coverage_bound(0.05, 1.1, 100) - 0.870) < 1e-3);
    // nu(a) -> 1 as a grows, so the bound clamps to 0.
    double prev = 0.0;
    for (const double a : {2.0, 5.0, 20.0, 100.0, 1000.0}) {
        CHECK(nu(a) > prev);
        prev = nu(a);
    }
    CHECK(nu(1e6) > 0.99);
    CHECK(robust_coverage_bound(0.0, 1e6, 100) == 0.0);
}

TEST_CASE("solve_c") {
    CHECK(std::abs(solve_c(3) - (3.0 - std::sqrt(3.0)) / 6.0) < 1e-9);
    for (std::size_t M = 3; M <= 50; ++M) {
        const double c = solve_c(M);
        const double e = 1.0 / (M - 1.0);
        CHECK(c < 0.5);
        CHECK(c > 0.0);
        CHECK(1.0 - std::pow(2.0 / M, e) <= c + 1e-12);
        CHECK(c <= 1.0 - std::pow(1.0 / M, e) + 1e-12);
    }
    CHECK_THROWS_AS(solve_c(2), DomainError);
}

TEST_CASE("shift gap strictness") {
    const auto same = shift_gap_two(two_symbol(0.4), two_symbol(0.4), 5);
    CHECK(same.tv_base == 0.0);
    CHECK(same.tv_uniques == 0.0);
    const auto g = shift_gap_two(two_symbol(0.3), two_symbol(0.4), 5);
    CHECK(g.tv_base == doctest::Approx(0.1));
    CHECK(g.tv_uniques < g.tv_base);

    Rng rng(12);
    for (const std::size_t M : {3, 5, 10}) {
        const double c = solve_c(M);
        for (int i = 0; i < 100; ++i) {
            double p = c + (1 - 2 * c) * rng.uniform01();
            double q = c + (1 - 2 * c) * rng.uniform01();
            if (p == q || p <= c || q <= c) {
                continue;
            }
            const auto r = shift_gap_two(two_symbol(p), two_symbol(q), M);
            CHECK(r.tv_uniques < r.tv_base);
        }
    }
    const double c5 = solve_c(5);
    CHECK_THROWS_AS(shift_gap_two(two_symbol(c5 * 0.5), two_symbol(0.4), 5), DomainError);
    CHECK_THROWS_AS(shift_gap_two(DiscreteDist({0.3, 0.3, 0.4}), two_symbol(0.4), 5), DomainError);
}
