#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "cobez/persist.hpp"
#include "cobez/taylor.hpp"

using namespace cobez;
using maps::EntireMap;
using persist::Barcode;

namespace {

const double kPi = std::acos(-1.0);

// A synthetic 1-d double-well profile carried on a full grid: the value only
// depends on the first coordinate bin.
grid::SublevelGrid double_well_grid() {
    grid::SublevelGrid g;
    g.n = 1;
    g.res = 64;
    g.r = 1.0;
    g.log2_delta = 0.0;
    g.values.assign(static_cast<std::size_t>(64) * 64, std::numeric_limits<double>::infinity());
    auto profile = [](int xbin) {
        if (xbin >= 5 && xbin <= 15) return 0.0;
        if (xbin >= 16 && xbin <= 30) return 1.0;
        if (xbin >= 31 && xbin <= 45) return 0.1;
        return 1.9;
    };
    int c[4] = {0, 0, 0, 0};
    for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
        g.values[static_cast<std::size_t>(cell)] = std::log2(std::max(profile(c[0]), 1e-300));
        if (profile(c[0]) == 0.0) g.values[static_cast<std::size_t>(cell)] = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < g.axes(); ++a) {
            if (++c[a] < g.res) break;
            c[a] = 0;
        }
    }
    return g;
}

}  // namespace

TEST_CASE("constant map yields a single infinite bar") {
    EntireMap f = maps::polynomial_map({{3.0, 0.0}});
    Barcode bc = persist::barcode0(f, 2.0, 32);
    REQUIRE(bc.bars.size() == 1);
    REQUIRE(bc.bars[0].infinite());
    REQUIRE_THAT(bc.bars[0].birth, Catch::Matchers::WithinRel(3.0, 1e-12));
    REQUIRE(bc.bars[0].multiplicity == 1);
}

TEST_CASE("double-well profile follows the elder rule") {
    grid::SublevelGrid g = double_well_grid();
    Barcode bc = persist::barcode0(g);
    REQUIRE(bc.total_multiplicity() == 2);
    REQUIRE(bc.bars.size() == 2);
    // [0, inf) and [0.1, 1)
    REQUIRE(bc.bars[0].birth == 0.0);
    REQUIRE(bc.bars[0].infinite());
    REQUIRE_THAT(bc.bars[1].birth, Catch::Matchers::WithinRel(0.1, 1e-12));
    REQUIRE_THAT(bc.bars[1].death, Catch::Matchers::WithinRel(1.0, 1e-12));
}

TEST_CASE("exp_shift barcode: four zero bars and one infinite bar") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    auto run = [&](int res) {
        Barcode bc = persist::barcode0(f, 10.0, res);
        double h = 20.0 / res;
        // births below the geometric bound 1.5 h max|f'| (|f'| = 1 at the
        // zeros); the infinite bar is born at the global minimum, i.e. at one
        // of the zeros, so it is one of the four.
        std::int64_t zero_bars = 0, infinite_bars = 0;
        for (auto& b : bc.bars) {
            if (b.infinite()) infinite_bars += b.multiplicity;
            if (b.birth < 1.5 * h) zero_bars += b.multiplicity;
        }
        REQUIRE(infinite_bars == 1);
        return zero_bars;
    };
    std::int64_t at512 = run(512);
    REQUIRE(at512 == 4);
    REQUIRE(run(1024) == 4);  // refinement oracle
}

TEST_CASE("count_long_bars") {
    Barcode bc;
    REQUIRE(persist::count_long_bars(bc, 1.0) == 0);
    bc.bars = {{0.0, 1.0, 1}, {0.0, 3.0, 1}, {2.0, std::numeric_limits<double>::infinity(), 1}};
    REQUIRE(persist::count_long_bars(bc, 2.0) == 2);
    REQUIRE(persist::count_long_bars(bc, 0.5) == 3);
    REQUIRE(persist::count_long_bars(bc, 1e9) == 1);  // only the infinite bar
}

TEST_CASE("zeta <= N_{0,delta} on the shared grid") {
    // delta values keep the continuum margin (death of zero bars is ~1+e^-10,
    // so delta must stay below 1 by more than the grid's birth floor).
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    for (double delta : {0.3, 0.5, 0.8}) {
        grid::SublevelGrid g = grid::sample_sublevel(f, 10.0, delta, 512);
        auto zero_pts = grid::zeros_for_counting(f, 10.0);
        auto comps = grid::components(g);
        grid::attach_zeros(g, comps, zero_pts);
        std::int64_t zeta = 0;
        for (auto& c : comps.components)
            if (!c.zero_ids.empty()) ++zeta;
        std::int64_t ndelta = persist::count_long_bars(persist::barcode0(g), delta);
        REQUIRE(zeta <= ndelta);
        if (delta == 0.5) REQUIRE(ndelta >= 4);
    }
}

TEST_CASE("bars alive at a threshold equal component count at that threshold") {
    EntireMap maps_under_test[] = {
        maps::builtin("exp_shift_n", {.n = 1}),
        maps::polynomial_map({{0.3, 0}, {-1, 0}, {0, 0}, {1, 0}}),
        maps::expression_map({"sin(z1)*cos(z1)+0.2"}, 1),
    };
    std::mt19937_64 rng(31);
    for (auto& f : maps_under_test) {
        grid::SublevelGrid g = grid::sample_sublevel_log2(f, 6.0, 0.0, 128);
        Barcode bc = persist::barcode0(g);
        // threshold range spanning the sampled values
        double lo = 1e300, hi = -1e300;
        int c[4] = {0, 0, 0, 0};
        for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
            if (g.inside_ball(c)) {
                double v = g.values[static_cast<std::size_t>(cell)];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            for (int a = 0; a < g.axes(); ++a) {
                if (++c[a] < g.res) break;
                c[a] = 0;
            }
        }
        std::uniform_real_distribution<double> u(lo, hi);
        for (int t = 0; t < 20; ++t) {
            double log2_thr = u(rng);
            grid::SublevelGrid masked = g;
            masked.log2_delta = log2_thr;
            auto comps = grid::components(masked);
            std::int64_t alive = persist::bars_alive_at(bc, std::exp2(log2_thr));
            REQUIRE(alive == static_cast<std::int64_t>(comps.components.size()));
        }
    }
}

TEST_CASE("N is non-increasing in delta") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    Barcode bc = persist::barcode0(f, 10.0, 256);
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (double delta : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0}) {
        std::int64_t n = persist::count_long_bars(bc, delta);
        REQUIRE(n <= prev);
        prev = n;
    }
}

TEST_CASE("stability verdicts") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    // identical maps: holds for any admissible pair
    auto rep = persist::stability_check(f, f, 0.2, 0.1, 10.0, 128);
    REQUIRE(rep.verdict == persist::StabilityVerdict::holds);
    // constant shift by 0.1
    EntireMap g = maps::shifted_map(f, {{0.1, 0.0}});
    auto rep2 = persist::stability_check(f, g, 0.15, 0.05, 10.0, 128);
    REQUIRE(rep2.sampled_distance <= 0.1 + 1e-12);
    REQUIRE(rep2.verdict == persist::StabilityVerdict::holds);
    // precondition violation: sampled distance above c - eps/2
    EntireMap gbig = maps::shifted_map(f, {{3.0, 0.0}});
    auto rep3 = persist::stability_check(f, gbig, 0.15, 0.05, 10.0, 128);
    REQUIRE(rep3.verdict == persist::StabilityVerdict::inapplicable);
    // malformed (c, eps)
    auto rep4 = persist::stability_check(f, g, 0.01, 0.05, 10.0, 128);
    REQUIRE(rep4.verdict == persist::StabilityVerdict::inapplicable);
}

TEST_CASE("N_{0,delta} respects the bezout-style bound") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    const double kLog2E = std::log2(std::exp(1.0));
    for (double r : {5.0, 10.0}) {
        for (double delta : {0.25, 0.5}) {
            Barcode bc = persist::barcode0(f, r, 512);
            std::int64_t n = persist::count_long_bars(bc, delta);
            double log2_mu_2r = 2.0 * r * kLog2E + std::log1p(std::exp(-2.0 * r)) / std::log(2.0);
            REQUIRE(static_cast<double>(n) <= taylor::bezout_bound(1, 2.0, log2_mu_2r, delta));
        }
    }
}

TEST_CASE("csv export") {
    Barcode bc;
    bc.bars = {{0.0, std::numeric_limits<double>::infinity(), 1}, {0.5, 1.5, 2}};
    std::ostringstream os;
    persist::write_csv(bc, os);
    REQUIRE(os.str() == "birth,death,multiplicity\n0,inf,1\n0.5,1.5,2\n");
}
