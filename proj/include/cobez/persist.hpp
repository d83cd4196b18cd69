#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "cobez/grid.hpp"

namespace cobez::persist {

using grid::SublevelGrid;
using maps::EntireMap;

struct Bar {
    double birth = 0.0;
    double death = std::numeric_limits<double>::infinity();
    std::int64_t multiplicity = 1;

    bool infinite() const { return std::isinf(death); }
    double length() const { return death - birth; }
};

struct Barcode {
    std::vector<Bar> bars;  // sorted by (birth, death)

    std::int64_t total_multiplicity() const {
        std::int64_t s = 0;
        for (auto& b : bars) s += b.multiplicity;
        return s;
    }
};

namespace detail {

inline double linear_value(double log2v) {
    if (log2v == -std::numeric_limits<double>::infinity()) return 0.0;
    if (log2v > 1020.0) return std::numeric_limits<double>::max() / 4.0;  // saturate
    return std::exp2(log2v);
}

}  // namespace detail

// Degree-0 sublevel persistence of |f| on the cell-adjacency graph
// (vertices = cells inside B_r, edges between face-adjacent cells entering at
// the max of the endpoint values). Elder rule, ties broken by cell index.
inline Barcode barcode0(const SublevelGrid& g) {
    const std::int64_t cells = g.cell_count();
    std::vector<std::int64_t> verts;
    {
        int c[4] = {0, 0, 0, 0};
        for (std::int64_t cell = 0; cell < cells; ++cell) {
            if (g.inside_ball(c)) verts.push_back(cell);
            for (int a = 0; a < g.axes(); ++a) {
                if (++c[a] < g.res) break;
                c[a] = 0;
            }
        }
    }
    std::sort(verts.begin(), verts.end(), [&](std::int64_t a, std::int64_t b) {
        double va = g.values[static_cast<std::size_t>(a)], vb = g.values[static_cast<std::size_t>(b)];
        if (va != vb) return va < vb;
        return a < b;
    });
    std::vector<std::int32_t> parent(static_cast<std::size_t>(cells), -1);
    std::vector<double> root_birth(static_cast<std::size_t>(cells), 0.0);
    std::vector<std::int64_t> root_birth_idx(static_cast<std::size_t>(cells), 0);
    auto find = [&](std::int32_t x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    std::int64_t stride[4] = {1, 0, 0, 0};
    for (int a = 1; a < g.axes(); ++a) stride[a] = stride[a - 1] * g.res;
    std::vector<Bar> bars;
    int c[4];
    for (std::int64_t v : verts) {
        double value = g.values[static_cast<std::size_t>(v)];
        parent[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(v);
        root_birth[static_cast<std::size_t>(v)] = detail::linear_value(value);
        root_birth_idx[static_cast<std::size_t>(v)] = v;
        g.coords(v, c);
        for (int a = 0; a < g.axes(); ++a) {
            for (int dir : {-1, 1}) {
                int idx = c[a] + dir;
                if (idx < 0 || idx >= g.res) continue;
                std::int64_t u = v + dir * stride[a];
                if (parent[static_cast<std::size_t>(u)] < 0) continue;  // not yet active
                std::int32_t ru = find(static_cast<std::int32_t>(u));
                std::int32_t rv = find(static_cast<std::int32_t>(v));
                if (ru == rv) continue;
                // elder rule: smaller (birth, index) survives
                std::int32_t elder = ru, young = rv;
                if (root_birth[static_cast<std::size_t>(rv)] < root_birth[static_cast<std::size_t>(ru)] ||
                    (root_birth[static_cast<std::size_t>(rv)] == root_birth[static_cast<std::size_t>(ru)] &&
                     root_birth_idx[static_cast<std::size_t>(rv)] < root_birth_idx[static_cast<std::size_t>(ru)])) {
                    elder = rv;
                    young = ru;
                }
                double death = detail::linear_value(value);
                if (death > root_birth[static_cast<std::size_t>(young)])
                    bars.push_back({root_birth[static_cast<std::size_t>(young)], death, 1});
                // zero-length pairs are dropped (born and die at the same value)
                parent[static_cast<std::size_t>(young)] = elder;
            }
        }
    }
    for (std::int64_t v : verts) {
        if (parent[static_cast<std::size_t>(v)] == static_cast<std::int32_t>(v))
            bars.push_back({root_birth[static_cast<std::size_t>(v)],
                            std::numeric_limits<double>::infinity(), 1});
    }
    std::sort(bars.begin(), bars.end(), [](const Bar& a, const Bar& b) {
        if (a.birth != b.birth) return a.birth < b.birth;
        return a.death < b.death;
    });
    // aggregate multiplicities
    Barcode out;
    for (auto& b : bars) {
        if (!out.bars.empty() && out.bars.back().birth == b.birth && out.bars.back().death == b.death)
            out.bars.back().multiplicity += 1;
        else
            out.bars.push_back(b);
    }
    return out;
}

inline Barcode barcode0(const EntireMap& map, double r, int res) {
    if (map.dim_in() != 1)
        throw grid::grid_error("barcode0(map, r, res) requires n = 1; pass a precomputed grid otherwise");
    SublevelGrid g = grid::sample_sublevel_log2(map, r, 0.0, res);
    return barcode0(g);
}

// Number of bars of length > delta; infinite bars always count.
inline std::int64_t count_long_bars(const Barcode& bc, double delta) {
    if (!(delta >= 0.0)) throw grid::grid_error("count_long_bars needs delta >= 0");
    std::int64_t n = 0;
    for (auto& b : bc.bars)
        if (b.length() > delta) n += b.multiplicity;
    return n;
}

// Bars alive at threshold t: birth <= t < death.
inline std::int64_t bars_alive_at(const Barcode& bc, double t) {
    std::int64_t n = 0;
    for (auto& b : bc.bars)
        if (b.birth <= t && t < b.death) n += b.multiplicity;
    return n;
}

enum class StabilityVerdict { holds, fails, inapplicable };

struct StabilityReport {
    StabilityVerdict verdict = StabilityVerdict::inapplicable;
    std::int64_t n_f_2c = -1;   // N_{0,2c}(f)
    std::int64_t n_g_eps = -1;  // N_{0,eps}(g)
    double sampled_distance = 0.0;
    double c = 0.0, eps = 0.0;
};

// N_{0,2c}(f) <= N_{0,eps}(g) whenever the sup distance of |f| and |g| on the
// shared grid is at most c - eps/2, c > eps/2 > 0.
inline StabilityReport stability_check(const EntireMap& f, const EntireMap& g, double c, double eps,
                                       double r, int res) {
    StabilityReport rep;
    rep.c = c;
    rep.eps = eps;
    if (!(c > eps / 2.0) || !(eps > 0.0)) return rep;  // inapplicable
    if (f.dim_in() != g.dim_in()) throw grid::grid_error("stability_check: dimension mismatch");
    SublevelGrid gf = grid::sample_sublevel_log2(f, r, 0.0, res);
    SublevelGrid gg = grid::sample_sublevel_log2(g, r, 0.0, res);
    double dist = 0.0;
    {
        int cc[4] = {0, 0, 0, 0};
        for (std::int64_t cell = 0; cell < gf.cell_count(); ++cell) {
            if (gf.inside_ball(cc)) {
                double a = detail::linear_value(gf.values[static_cast<std::size_t>(cell)]);
                double b = detail::linear_value(gg.values[static_cast<std::size_t>(cell)]);
                dist = std::max(dist, std::fabs(a - b));
            }
            for (int a2 = 0; a2 < gf.axes(); ++a2) {
                if (++cc[a2] < gf.res) break;
                cc[a2] = 0;
            }
        }
    }
    rep.sampled_distance = dist;
    if (!(dist <= c - eps / 2.0)) return rep;  // inapplicable
    rep.n_f_2c = count_long_bars(barcode0(gf), 2.0 * c);
    rep.n_g_eps = count_long_bars(barcode0(gg), eps);
    rep.verdict = (rep.n_f_2c <= rep.n_g_eps) ? StabilityVerdict::holds : StabilityVerdict::fails;
    return rep;
}

// CSV export: birth,death,multiplicity with death = "inf" on infinite bars.
inline void write_csv(const Barcode& bc, std::ostream& os) {
    os << "birth,death,multiplicity\n";
    char buf[96];
    for (auto& b : bc.bars) {
        if (b.infinite())
            std::snprintf(buf, sizeof buf, "%.17g,inf,%lld\n", b.birth,
                          static_cast<long long>(b.multiplicity));
        else
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%lld\n", b.birth, b.death,
                          static_cast<long long>(b.multiplicity));
        os << buf;
    }
}

}  // namespace cobez::persist
