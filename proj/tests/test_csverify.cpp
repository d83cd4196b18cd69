#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cobez/csverify.hpp"

using namespace cobez;
using maps::CSParams;
using xnum::LogComplex;

namespace {

// Oracle: C_0 = (1/2) prod (1 - 3/2^{i+1}) by partial product far past double
// exhaustion.
double c0_oracle() {
    double p = 0.5;
    for (int i = 1; i <= 400; ++i) p *= 1.0 - 3.0 * std::ldexp(1.0, -(i + 1));
    return p;
}

CSParams pow11() { return CSParams{};  /* c_i = 2^i */ }

}  // namespace

TEST_CASE("C_0 constant") {
    REQUIRE_THAT(std::exp2(csverify::log2_c0()), Catch::Matchers::WithinRel(c0_oracle(), 1e-12));
    REQUIRE_THAT(std::exp2(csverify::log2_c0()), Catch::Matchers::WithinAbs(0.0523, 5e-5));
}

TEST_CASE("structure thresholds at delta = 0.1") {
    auto st = csverify::cs_structure(0.1, pow11());
    REQUIRE(st.k_merge == 3);
    REQUIRE(st.k_sep == 2);
}

TEST_CASE("k_merge and k_sep are monotone in delta") {
    std::int64_t prev_merge = std::numeric_limits<std::int64_t>::max();
    std::int64_t prev_sep = 0;
    for (double delta : {1e-6, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.6, 0.9}) {
        auto st = csverify::cs_structure(delta, pow11());
        REQUIRE(st.k_merge <= prev_merge);  // merge threshold non-increasing in delta
        REQUIRE(st.k_sep >= prev_sep);      // separation threshold non-decreasing
        prev_merge = st.k_merge;
        prev_sep = st.k_sep;
    }
}

TEST_CASE("interval containment at the threshold delta collapses b to 1") {
    for (std::int64_t i : {1, 2, 3, 5}) {
        CSParams p = pow11();
        double c = p.c.c(i);
        double id = static_cast<double>(i);
        double delta = std::exp2((id - 1.0) * id / 2.0 - c * c);
        auto rep = csverify::interval_containment(i, delta, p);
        REQUIRE(rep.hypothesis_holds);
        REQUIRE_THAT(rep.log2_b, Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("interval containment: direct formula oracle at i=3") {
    // b_3 = 2^{8 - 3/8} * 0.1^{1/8}; high-precision evaluation gives 148.03
    auto rep = csverify::interval_containment(3, 0.1, pow11());
    REQUIRE(rep.hypothesis_holds);
    long double oracle = std::pow(2.0L, 8.0L - 3.0L / 8.0L) * std::pow(0.1L, 1.0L / 8.0L);
    REQUIRE_THAT(std::exp2(rep.log2_b), Catch::Matchers::WithinRel(static_cast<double>(oracle), 1e-12));
    REQUIRE_THAT(std::exp2(rep.log2_b), Catch::Matchers::WithinAbs(148.03, 0.01));
}

TEST_CASE("interval containment samples pass whenever the hypothesis holds") {
    for (std::int64_t i = 1; i <= 12; ++i) {
        for (double delta : {0.01, 0.1, 0.5}) {
            auto rep = csverify::interval_containment(i, delta, pow11());
            if (rep.hypothesis_holds) {
                REQUIRE(rep.samples_run);
                REQUIRE(rep.samples_ok);
            }
        }
    }
}

TEST_CASE("separation check against the C_0 oracle") {
    double log2_c0 = std::log2(c0_oracle());
    auto r1 = csverify::separation_check(1, 0.01);
    REQUIRE(r1.analytic == (log2_c0 > std::log2(0.01)));
    REQUIRE(r1.analytic);
    REQUIRE(r1.samples_run);
    REQUIRE(r1.samples_ok);
    auto r2 = csverify::separation_check(1, 0.06);
    REQUIRE_FALSE(r2.analytic);  // 0.0523 < 0.06: inconclusive, flagged not asserted
}

TEST_CASE("minorant at x = 6 equals C_0 * 2 exactly; strict excess from k = 3") {
    auto r2 = csverify::separation_check(2, 0.01);
    REQUIRE_THAT(r2.log2_minorant, Catch::Matchers::WithinAbs(csverify::log2_c0() + 1.0, 1e-9));
    for (std::int64_t k = 3; k <= 12; ++k) {
        auto rk = csverify::separation_check(k, 0.01);
        double chain = csverify::log2_c0() + 0.5 * static_cast<double>(k - 1) * static_cast<double>(k);
        REQUIRE(rk.log2_minorant > chain);
        REQUIRE(rk.minorant_exceeds_delta);
    }
}

TEST_CASE("zeta bracket at r = 2^20, delta = 0.1") {
    auto br = csverify::zeta_bracket(std::ldexp(1.0, 20), 0.1, pow11());
    // active slices 1..19; slices >= 3 merged; slices 1,2 one blob each;
    // hyperplanes clean from k_sep = 2 upward
    REQUIRE(br.upper == 19);
    REQUIRE(br.lower == 18);
    REQUIRE(br.upper - br.lower <= 1);
    REQUIRE(br.inside_envelope);
    double ratio_lo = static_cast<double>(br.lower) / 20.0;
    double ratio_hi = static_cast<double>(br.upper) / 20.0;
    REQUIRE(ratio_lo >= 0.9);
    REQUIRE(ratio_hi <= 1.1);
}

TEST_CASE("zeta bracket envelopes: spec cases") {
    // delta >= 1/2: upper envelope = log r
    auto b1 = csverify::zeta_bracket(1024.0, 0.6, pow11());
    REQUIRE_THAT(b1.envelope_upper, Catch::Matchers::WithinAbs(10.0, 1e-12));
    REQUIRE(b1.upper <= 10);
    // delta <= C_0, r = 1024: lower envelope = 9
    auto b2 = csverify::zeta_bracket(1024.0, 0.01, pow11());
    REQUIRE_THAT(b2.envelope_lower, Catch::Matchers::WithinAbs(9.0, 1e-12));
    REQUIRE(b2.lower >= 9);
}

TEST_CASE("zeta bracket sweep stays inside both paper envelopes") {
    for (int k : {4, 8, 12, 16, 20, 24, 30}) {
        double r = std::ldexp(1.0, k);
        for (double delta : {0.01, 0.05, 0.1, 0.25, 0.6}) {
            auto br = csverify::zeta_bracket(r, delta, pow11());
            INFO("r=2^" << k << " delta=" << delta << " bracket=[" << br.lower << "," << br.upper
                         << "] envelope=[" << br.envelope_lower << "," << br.envelope_upper << "]");
            REQUIRE(br.lower <= br.upper);
            REQUIRE(br.inside_envelope);
        }
    }
}

TEST_CASE("g vanishes exactly on every slice used by the bracket") {
    for (int i = 1; i <= 12; ++i) {
        LogComplex z = xnum::from_double(std::ldexp(1.0, i));
        REQUIRE(maps::cs_g(z).is_zero());
    }
}

TEST_CASE("zeta0 analysis: growth class and the l=1 numbers") {
    // c_i = 2^{2^i}: O(log log log r)
    CSParams p22{maps::CSequence::pow_rule(1.0, 2), 0x1p-50};
    auto rep22 = csverify::zeta0_analysis(std::ldexp(1.0, 40), 0.1, p22);
    REQUIRE(rep22.growth_class == "O(log log log r)");
    // lambda = 1, l = 1, delta = 0.1, r = 2^64: head = c_1 + c_2 = 6, i0 = 2,
    // k = 6, upper = 10, closed form = log log r + 4
    auto rep = csverify::zeta0_analysis(std::ldexp(1.0, 64), 0.1, pow11());
    REQUIRE(rep.applicable);
    REQUIRE(rep.i0 == 2);
    REQUIRE(rep.k == 6);
    REQUIRE_THAT(rep.upper_bound, Catch::Matchers::WithinAbs(10.0, 1e-9));
    REQUIRE_THAT(rep.closed_form_m, Catch::Matchers::WithinAbs(4.0, 1e-9));
    // below the validity floor (l=1: floor is exp2(exp2(1)) = 4)
    auto low = csverify::zeta0_analysis(3.0, 0.1, pow11());
    REQUIRE_FALSE(low.applicable);
    // explicit-rule params are rejected
    CSParams pex{maps::CSequence::explicit_list({2, 3, 4}), 0x1p-50};
    REQUIRE_THROWS_AS(csverify::zeta0_analysis(16.0, 0.1, pex), maps::config_error);
}

TEST_CASE("zeta0 slices: certified peninsulas where b_i exits the ball") {
    auto rep = csverify::zeta0_analysis(std::ldexp(1.0, 8), 0.1, pow11());
    REQUIRE(rep.applicable);
    bool saw_peninsula = false;
    for (auto& s : rep.slices) {
        // b_i > r certainly exits every slice of the ball
        if (std::exp2(s.log2_b) > std::ldexp(1.0, 8)) {
            REQUIRE(s.peninsula_certified);
            saw_peninsula = true;
        }
    }
    REQUIRE(saw_peninsula);
}

TEST_CASE("jacobian decay verdicts for both c-sequences") {
    CSParams plin{maps::CSequence::explicit_list({2, 3, 4, 5, 6, 7, 8, 9, 10, 11}), 0x1p-50};
    for (std::int64_t i = 1; i <= 10; ++i) {
        for (auto* p : {&plin}) {
            std::int64_t c = p->c.c_int(i);
            for (std::int64_t j = 1; j <= c; ++j) {
                auto rep = csverify::jacobian_decay(i, j, *p);
                REQUIRE(rep.verdict);
            }
        }
    }
    CSParams ppow = pow11();
    for (std::int64_t i = 1; i <= 10; ++i) {
        std::int64_t c = ppow.c.c_int(i);
        for (std::int64_t j = 1; j <= c; ++j) {
            auto rep = csverify::jacobian_decay(i, j, ppow);
            REQUIRE(rep.verdict);
        }
    }
    // i=1, j=1, c_1=2: strictly below -c_1^2 + 1 - 2 = -5
    auto r11 = csverify::jacobian_decay(1, 1, ppow);
    REQUIRE(r11.rhs_log2 == -5.0);
    REQUIRE(r11.log2_det < -5.0);
}

TEST_CASE("closed-form jacobian matches the evaluated map jacobian") {
    CSParams p = pow11();
    maps::EntireMap F = maps::cs_F_map(p);
    for (std::int64_t i = 1; i <= 4; ++i) {
        std::int64_t c = p.c.c_int(i);
        for (std::int64_t j = 1; j <= c; j += std::max<std::int64_t>(1, c / 3)) {
            auto rep = csverify::jacobian_decay(i, j, p);
            std::vector<LogComplex> pt = {xnum::from_double(std::ldexp(1.0, static_cast<int>(i))),
                                          xnum::from_double(1.0 / static_cast<double>(j))};
            auto J = F.jacobian(pt);
            // det = J00*J11 - J01*J10 with J01 = 0
            double log2_det = xnum::log2_abs(J[0]) + xnum::log2_abs(J[3]);
            INFO("i=" << i << " j=" << j);
            REQUIRE_THAT(log2_det, Catch::Matchers::WithinAbs(rep.log2_det, 1e-6));
        }
    }
}

TEST_CASE("li-taylor falsification cutoff for (c,b) = (1,1)") {
    auto cut = csverify::li_taylor_cutoff(1.0, 1.0, pow11());
    REQUIRE(cut.found);
    REQUIRE(cut.i_star >= 1);
    REQUIRE(cut.i_star <= 10);
    // beyond the cutoff, the certified chain holds slice by slice
    const double C = 4.0 + maps::log2_prod_one_plus_pow2();
    for (std::int64_t i = cut.i_star; i <= cut.i_star + 5; ++i) {
        std::int64_t c = pow11().c.c_int(i);
        auto rep = csverify::jacobian_decay(i, 1, pow11());
        (void)c;
        double id = static_cast<double>(i);
        double mu_up = 1.5 * (id + 1) * (id + 1) + 3.5 * (id + 1) + C;
        REQUIRE(rep.log2_det < -1.0 * mu_up);
    }
}
