#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "cobez/taylor.hpp"

using namespace cobez;
using maps::EntireMap;

namespace {

const double kPi = std::acos(-1.0);
const double kLog2E = std::log2(std::exp(1.0));

// exact Taylor coefficients of the fixtures at 0
double exp_coeff(int j) {
    double c = 1.0;
    for (int t = 1; t <= j; ++t) c /= t;
    return c;
}
double sin_coeff(int j) {
    if (j % 2 == 0) return 0.0;
    double c = exp_coeff(j);
    return ((j / 2) % 2 == 0) ? c : -c;
}

std::complex<double> eval_poly(const std::vector<std::complex<double>>& c, std::complex<double> z) {
    std::complex<double> acc{0, 0};
    for (std::size_t j = c.size(); j-- > 0;) acc = acc * z + c[j];
    return acc;
}

std::complex<double> eval_map(const EntireMap& f, std::complex<double> z) {
    return xnum::to_complex(f.eval1(xnum::from_complex(z.real(), z.imag())));
}

}  // namespace

TEST_CASE("remainder_bound formula") {
    REQUIRE_THAT(taylor::remainder_bound(2.0, 0, 0.0), Catch::Matchers::WithinAbs(1.0, 1e-15));
    REQUIRE_THAT(taylor::remainder_bound(2.0, 10, 5.0), Catch::Matchers::WithinAbs(-4.0, 1e-12));
    REQUIRE_THROWS_AS(taylor::remainder_bound(1.0, 3, 0.0), taylor::domain_error);
    REQUIRE_THROWS_AS(taylor::remainder_bound(0.5, 3, 0.0), taylor::domain_error);
}

TEST_CASE("choose_degree picks the minimal k") {
    REQUIRE(taylor::choose_degree(2.0, 0.0, 2.0) == 2);
    REQUIRE(taylor::choose_degree(4.0, 10.0, 1.0) == 6);
    // minimality: k-1 must violate the strict inequality
    for (double a : {1.5, 2.0, 4.0}) {
        for (double mu : {0.0, 3.7, 20.0}) {
            for (double delta : {0.01, 0.3, 1.0, 4.0}) {
                auto k = taylor::choose_degree(a, mu, delta);
                REQUIRE(taylor::remainder_bound(a, k, mu) < std::log2(delta) - 1.0);
                if (k > 1) REQUIRE(taylor::remainder_bound(a, k - 1, mu) >= std::log2(delta) - 1.0);
            }
        }
    }
    // monotone non-increasing in delta
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (double delta : {0.01, 0.05, 0.2, 0.5, 1.0, 2.0, 8.0}) {
        auto k = taylor::choose_degree(2.0, 12.0, delta);
        REQUIRE(k <= prev);
        prev = k;
    }
}

TEST_CASE("bound formulas at explicit degree") {
    REQUIRE(taylor::bezout_bound_for_degree(1, 2) == 12.0);
    REQUIRE(taylor::bezout_bound_for_degree(2, 3) == 13509.0);
    REQUIRE(taylor::tau_bound_for_degree(1, 5) == 5.0);
    REQUIRE(taylor::tau_bound_for_degree(2, 5) == 25.0);
    REQUIRE(taylor::zeta_d_bound_for_degree(1, 1) == 15.0);
    REQUIRE(taylor::zeta_d_bound_for_degree(2, 2) == 2058.0);
}

TEST_CASE("delta-level bounds respect the mu/2 hypothesis") {
    REQUIRE_THROWS_AS(taylor::bezout_bound(1, 2.0, 1.0, 1.5), taylor::domain_error);
    REQUIRE_NOTHROW(taylor::bezout_bound(1, 2.0, 10.0, 0.5));
    // exp_shift n=1, r=10, a=2, delta=0.5: measured zeta (4) far below the bound
    double log2_mu_ar = 20.0 * kLog2E + std::log1p(std::exp(-20.0)) / std::log(2.0);
    REQUIRE(taylor::bezout_bound(1, 2.0, log2_mu_ar, 0.5) >= 4.0);
}

TEST_CASE("bounds are monotone in delta and mu") {
    for (int n : {1, 2}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double delta : {0.01, 0.1, 0.5, 2.0}) {
            double b = taylor::bezout_bound(n, 2.0, 15.0, delta);
            REQUIRE(b <= prev);
            prev = b;
            REQUIRE(taylor::tau_bound(n, 2.0, 15.0, delta) <= taylor::bezout_bound(n, 2.0, 15.0, delta));
        }
        double prev_mu = 0.0;
        for (double mu : {5.0, 10.0, 30.0}) {
            double b = taylor::zeta_d_bound(n, 2.0, mu, 0.5);
            REQUIRE(b >= prev_mu);
            prev_mu = b;
        }
    }
}

TEST_CASE("zeta_d_bound vs the bezout component term, exhaustive oracle") {
    // Frozen oracle result: domination holds for all k at n=1, only from k=16
    // at n=2, and for no k <= 100 at n=3.
    auto dominates = [](int n, std::int64_t k) {
        return taylor::zeta_d_bound_for_degree(n, k) >=
               5.0 * static_cast<double>(k) * std::pow(10.0 * static_cast<double>(k), 2 * n - 2);
    };
    for (std::int64_t k = 1; k <= 100; ++k) REQUIRE(dominates(1, k));
    for (std::int64_t k = 1; k <= 15; ++k) REQUIRE_FALSE(dominates(2, k));
    for (std::int64_t k = 16; k <= 100; ++k) REQUIRE(dominates(2, k));
    for (std::int64_t k = 1; k <= 100; ++k) REQUIRE_FALSE(dominates(3, k));
}

TEST_CASE("taylor_coeffs of exp against factorials") {
    EntireMap f = maps::expression_map({"exp(z1)"}, 1);
    auto c = taylor::taylor_coeffs(f, 6, 1.0);
    for (int j = 0; j < 6; ++j) {
        REQUIRE_THAT(c[static_cast<std::size_t>(j)].real(),
                     Catch::Matchers::WithinAbs(exp_coeff(j), 1e-10));
        REQUIRE_THAT(c[static_cast<std::size_t>(j)].imag(), Catch::Matchers::WithinAbs(0.0, 1e-10));
    }
}

TEST_CASE("taylor_coeffs of z^3") {
    EntireMap f = maps::polynomial_map({{0, 0}, {0, 0}, {0, 0}, {1, 0}});
    auto c = taylor::taylor_coeffs(f, 5, 1.5);
    std::vector<double> want = {0, 0, 0, 1, 0};
    for (int j = 0; j < 5; ++j) {
        REQUIRE_THAT(std::abs(c[static_cast<std::size_t>(j)] -
                              std::complex<double>(want[static_cast<std::size_t>(j)], 0.0)),
                     Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("measured exp remainder sits under the certified bound") {
    // f = exp, r = 1, a = 2, k = 8; mu(exp, 2) = e^2
    double bound = std::exp2(taylor::remainder_bound(2.0, 8, 2.0 * kLog2E));
    double worst = 0.0;
    for (int m = 0; m < 512; ++m) {
        double th = 2.0 * kPi * m / 512.0;
        std::complex<double> z = std::polar(1.0, th);
        std::complex<double> p{0, 0};
        for (int j = 7; j >= 0; --j) p = p * z + exp_coeff(j);
        worst = std::max(worst, std::abs(std::exp(z) - p));
    }
    REQUIRE(worst <= bound);
}

TEST_CASE("quadrature model stays within remainder bound plus slack") {
    // f = exp_shift, r = 1, a = 2, delta = 0.1
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    double log2_mu_2 = *f.log2_mu_upper(2.0);
    auto model = taylor::taylor_model(f, 2.0, log2_mu_2, 0.1, 1.5);
    double bound = std::exp2(model.log2_remainder_bound) + 1e-9;
    double worst = 0.0;
    for (int m = 0; m < 512; ++m) {
        double th = 2.0 * kPi * m / 512.0;
        std::complex<double> z = std::polar(1.0, th);
        worst = std::max(worst, std::abs(eval_map(f, z) - model.eval(z)));
    }
    REQUIRE(worst <= bound);
}

TEST_CASE("empirical Cauchy remainder across the fixture sweep") {
    struct Fixture {
        const char* name;
        std::vector<double> coeffs;                 // exact Taylor coefficients c_0..c_20
        double (*log2_mu)(double);                  // certified log2 mu(f, rho)
        EntireMap map;
    };
    auto exp_mu = +[](double rho) { return rho * kLog2E; };
    auto sin_mu = +[](double rho) { return std::log2(std::sinh(rho)); };
    auto shift_mu = +[](double rho) { return rho * kLog2E + std::log1p(std::exp(-rho)) / std::log(2.0); };
    std::vector<Fixture> fixtures;
    {
        std::vector<double> ce, cs, csh;
        for (int j = 0; j <= 20; ++j) {
            ce.push_back(exp_coeff(j));
            cs.push_back(sin_coeff(j));
            csh.push_back(j == 0 ? 2.0 : exp_coeff(j));
        }
        fixtures.push_back({"exp", ce, exp_mu, maps::expression_map({"exp(z1)"}, 1)});
        fixtures.push_back({"sin", cs, sin_mu, maps::expression_map({"sin(z1)"}, 1)});
        fixtures.push_back({"exp_shift", csh, shift_mu, maps::builtin("exp_shift_n", {.n = 1})});
    }
    for (auto& fx : fixtures) {
        for (double r : {0.5, 1.0, 2.0}) {
            for (double a : {1.5, 2.0, 4.0}) {
                double log2_mu_ar = fx.log2_mu(a * r);
                for (std::int64_t k = 0; k <= 20; ++k) {
                    double bound = std::exp2(taylor::remainder_bound(a, k, log2_mu_ar));
                    double worst = 0.0;
                    for (int m = 0; m < 256; ++m) {
                        double th = 2.0 * kPi * m / 256.0;
                        std::complex<double> z = std::polar(r, th);
                        std::complex<double> p{0, 0};
                        for (std::int64_t j = k - 1; j >= 0; --j)
                            p = p * z + fx.coeffs[static_cast<std::size_t>(j)];
                        worst = std::max(worst, std::abs(eval_map(fx.map, z) - p));
                    }
                    INFO(fx.name << " r=" << r << " a=" << a << " k=" << k);
                    REQUIRE(worst <= bound);
                }
            }
        }
    }
}
