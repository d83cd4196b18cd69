#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>

#include "cobez/grid.hpp"

using namespace cobez;
using grid::SublevelGrid;
using maps::EntireMap;

namespace {

const double kPi = std::acos(-1.0);

std::int64_t masked_count(const SublevelGrid& g) {
    std::int64_t cnt = 0;
    int c[4] = {0, 0, 0, 0};
    for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
        if (g.masked_value(cell, c)) ++cnt;
        for (int a = 0; a < g.axes(); ++a) {
            if (++c[a] < g.res) break;
            c[a] = 0;
        }
    }
    return cnt;
}

std::int64_t ball_cell_count(const SublevelGrid& g) {
    std::int64_t cnt = 0;
    int c[4] = {0, 0, 0, 0};
    for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
        if (g.inside_ball(c)) ++cnt;
        for (int a = 0; a < g.axes(); ++a) {
            if (++c[a] < g.res) break;
            c[a] = 0;
        }
    }
    return cnt;
}

// Independent component oracle: BFS flood fill with a shuffled processing
// order (exercises the order-invariance property).
std::vector<std::vector<std::int64_t>> bfs_components(const SublevelGrid& g, unsigned seed) {
    std::vector<std::int64_t> masked;
    std::vector<char> is_masked(static_cast<std::size_t>(g.cell_count()), 0);
    int c[4] = {0, 0, 0, 0};
    for (std::int64_t cell = 0; cell < g.cell_count(); ++cell) {
        if (g.masked_value(cell, c)) {
            masked.push_back(cell);
            is_masked[static_cast<std::size_t>(cell)] = 1;
        }
        for (int a = 0; a < g.axes(); ++a) {
            if (++c[a] < g.res) break;
            c[a] = 0;
        }
    }
    std::mt19937_64 rng(seed);
    std::shuffle(masked.begin(), masked.end(), rng);
    std::int64_t stride[4] = {1, 0, 0, 0};
    for (int a = 1; a < g.axes(); ++a) stride[a] = stride[a - 1] * g.res;
    std::vector<char> seen(static_cast<std::size_t>(g.cell_count()), 0);
    std::vector<std::vector<std::int64_t>> comps;
    for (std::int64_t start : masked) {
        if (seen[static_cast<std::size_t>(start)]) continue;
        std::vector<std::int64_t> comp, frontier{start};
        seen[static_cast<std::size_t>(start)] = 1;
        while (!frontier.empty()) {
            std::int64_t cur = frontier.back();
            frontier.pop_back();
            comp.push_back(cur);
            int cc[4];
            g.coords(cur, cc);
            for (int a = 0; a < g.axes(); ++a) {
                for (int dir : {-1, 1}) {
                    int nidx = cc[a] + dir;
                    if (nidx < 0 || nidx >= g.res) continue;
                    std::int64_t nb = cur + dir * stride[a];
                    if (!is_masked[static_cast<std::size_t>(nb)] || seen[static_cast<std::size_t>(nb)]) continue;
                    seen[static_cast<std::size_t>(nb)] = 1;
                    frontier.push_back(nb);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    std::sort(comps.begin(), comps.end());
    return comps;
}

}  // namespace

TEST_CASE("constant maps give empty or full masks") {
    EntireMap five = maps::polynomial_map({{5.0, 0.0}});
    SublevelGrid g = grid::sample_sublevel(five, 2.0, 1.0, 32);
    REQUIRE(masked_count(g) == 0);
    REQUIRE(grid::components(g).components.empty());

    EntireMap zero = maps::polynomial_map({{0.0, 0.0}});
    SublevelGrid gz = grid::sample_sublevel(zero, 2.0, 1.0, 32);
    REQUIRE(masked_count(gz) == ball_cell_count(gz));
    auto comps = grid::components(gz);
    REQUIRE(comps.components.size() == 1);
    REQUIRE(comps.components[0].touches_sphere);
}

TEST_CASE("exp_shift sublevel set splits into four blobs") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    SublevelGrid g = grid::sample_sublevel(f, 10.0, 0.5, 512);
    auto comps = grid::components(g);
    REQUIRE(comps.components.size() == 4);
    for (auto& c : comps.components) REQUIRE(c.is_island());
    // refinement oracle: same component count at doubled resolution
    SublevelGrid g2 = grid::sample_sublevel(f, 10.0, 0.5, 1024);
    REQUIRE(grid::components(g2).components.size() == 4);
}

TEST_CASE("component partition matches a shuffled BFS oracle") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    SublevelGrid g = grid::sample_sublevel(f, 10.0, 1.8, 128);
    auto ours = grid::components(g);
    std::vector<std::vector<std::int64_t>> ours_sorted;
    for (auto& c : ours.components) ours_sorted.push_back(c.cells);
    std::sort(ours_sorted.begin(), ours_sorted.end());
    for (unsigned seed : {1u, 7u, 99u}) {
        auto oracle = bfs_components(g, seed);
        REQUIRE(oracle == ours_sorted);
    }
}

TEST_CASE("coarse_count on exp_shift") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    auto rep = grid::coarse_count(f, 10.0, 0.5, 128);
    REQUIRE(rep.converged);
    REQUIRE(rep.zeta == 4);
    REQUIRE(rep.zeta0 == 4);

    auto rep2 = grid::coarse_count(f, 2.0, 0.5, 64);
    REQUIRE(rep2.converged);
    REQUIRE(rep2.zeta == 0);
    REQUIRE(rep2.zeta0 == 0);
}

TEST_CASE("coarse_count on z^2 finds one island around the double zero") {
    EntireMap f = maps::polynomial_map({{0, 0}, {0, 0}, {1, 0}});
    auto rep = grid::coarse_count(f, 1.0, 0.25, 64);
    REQUIRE(rep.converged);
    REQUIRE(rep.zeta == 1);
    REQUIRE(rep.zeta0 == 1);
}

TEST_CASE("zeta is non-increasing in delta above the grid floor") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    auto zeros_pts = grid::zeros_for_counting(f, 10.0);
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (double delta : {0.3, 0.5, 1.0, 1.5, 1.9, 2.5}) {
        auto rep = grid::coarse_count_with_zeros(f, 10.0, delta, 256, zeros_pts);
        REQUIRE(rep.converged);
        REQUIRE(rep.zeta <= prev);
        REQUIRE(rep.zeta0 <= rep.zeta);
        prev = rep.zeta;
    }
}

TEST_CASE("islands contain zeros on converged grids") {
    struct Fixture {
        EntireMap map;
        double r, delta;
    };
    std::vector<Fixture> fixtures = {
        {maps::builtin("exp_shift_n", {.n = 1}), 10.0, 0.5},
        {maps::polynomial_map({{0, 0}, {-1, 0}, {0, 0}, {1, 0}}), 2.0, 0.2},  // z^3 - z
        {maps::expression_map({"sin(z1)"}, 1), 7.2, 0.4},
    };
    for (auto& fx : fixtures) {
        auto zero_pts = grid::zeros_for_counting(fx.map, fx.r);
        grid::SublevelGrid g = grid::sample_sublevel(fx.map, fx.r, fx.delta, 256);
        auto comps = grid::components(g);
        grid::attach_zeros(g, comps, zero_pts);
        for (auto& c : comps.components) {
            if (c.is_island()) REQUIRE(!c.zero_ids.empty());
        }
    }
}

TEST_CASE("n=2 grids: exp_shift product zeros") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 2});
    auto rep = grid::coarse_count(f, 6.0, 0.5, 32);
    REQUIRE(rep.converged);
    REQUIRE(rep.zeta == 4);
    REQUIRE(rep.zeta0 == 4);
}

TEST_CASE("resolution and cell caps are enforced") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    REQUIRE_THROWS_AS(grid::sample_sublevel(f, 1.0, 0.5, 8), grid::grid_error);
    REQUIRE_THROWS_AS(grid::sample_sublevel(f, 1.0, 0.5, 20000), grid::grid_error);
    REQUIRE_THROWS_AS(grid::sample_sublevel(f, 1.0, -0.5, 64), grid::grid_error);
}

TEST_CASE("mask dump round trip") {
    EntireMap f = maps::builtin("exp_shift_n", {.n = 1});
    SublevelGrid g = grid::sample_sublevel(f, 10.0, 0.5, 32);
    std::string bin = "mask_test.bin", side = "mask_test.json";
    grid::dump_mask(g, bin, side);
    std::ifstream in(bin, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(static_cast<std::int64_t>(bytes.size()) == g.cell_count());
    std::int64_t ones = std::count(bytes.begin(), bytes.end(), 1);
    REQUIRE(ones == masked_count(g));
    std::ifstream js(side);
    nlohmann::json sidecar = nlohmann::json::parse(js);
    REQUIRE(sidecar["res"] == 32);
    REQUIRE(sidecar["schema"] == "cobez-mask-v1");
    std::remove(bin.c_str());
    std::remove(side.c_str());
}
