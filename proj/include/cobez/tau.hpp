#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "cobez/grid.hpp"
#include "cobez/zeros.hpp"

namespace cobez::zeros {

struct TauReport {
    std::int64_t tau = 0;
    std::int64_t islands = 0;
    bool converged = false;
    std::vector<int> resolutions;
};

namespace detail {

struct TauLevel {
    std::int64_t tau = 0;
    std::int64_t islands = 0;
    bool contour_ok = true;
};

inline TauLevel tau_at_res(const EntireMap& map, double r, double delta, int res) {
    TauLevel out;
    grid::SublevelGrid g = grid::sample_sublevel(map, r, delta, res);
    grid::ComponentSet comps = grid::components(g);
    double h = g.cell_size();
    for (std::size_t ci = 0; ci < comps.components.size(); ++ci) {
        const auto& comp = comps.components[ci];
        if (!comp.is_island()) continue;
        ++out.islands;
        // contour one guard cell outside the island's bounding box
        Rect rect{comp.bbox_lo[0] - 1.5 * h, comp.bbox_lo[1] - 1.5 * h, comp.bbox_hi[0] + 1.5 * h,
                  comp.bbox_hi[1] + 1.5 * h};
        // must be separable from every other component
        for (std::size_t cj = 0; cj < comps.components.size() && out.contour_ok; ++cj) {
            if (cj == ci) continue;
            for (std::int64_t cell : comps.components[cj].cells) {
                int cc[4];
                g.coords(cell, cc);
                double x = g.center(cc[0]), y = g.center(cc[1]);
                if (x >= rect.x0 - 0.5 * h && x <= rect.x1 + 0.5 * h && y >= rect.y0 - 0.5 * h &&
                    y <= rect.y1 + 0.5 * h) {
                    out.contour_ok = false;
                    break;
                }
            }
        }
        if (!out.contour_ok) return out;
        try {
            out.tau += winding_number(map, rect);
        } catch (const contour_error&) {
            out.contour_ok = false;
            return out;
        }
    }
    return out;
}

}  // namespace detail

// Total number of zeros with multiplicity contained in islands: per island,
// the argument-principle count over a contour one guard cell outside its
// bounding box, verified disjoint from all other components. Non-separable
// contours fall back to a finer grid.
inline TauReport tau(const EntireMap& map, double r, double delta, int res_start) {
    if (map.dim_in() != 1 || map.dim_out() != 1)
        throw maps::config_error("tau requires a 1-variable scalar map");
    TauReport rep;
    int res = res_start;
    std::optional<detail::TauLevel> prev;
    for (;;) {
        if (std::pow(static_cast<double>(res), 2.0) > static_cast<double>(grid::kMaxCells)) {
            if (prev && !prev->contour_ok)
                throw grid::grid_error("tau: islands not separable by safe contours at the cell cap");
            rep.converged = false;
            return rep;
        }
        detail::TauLevel cur = detail::tau_at_res(map, r, delta, res);
        rep.resolutions.push_back(res);
        if (cur.contour_ok) {
            rep.tau = cur.tau;
            rep.islands = cur.islands;
            if (prev && prev->contour_ok && prev->tau == cur.tau && prev->islands == cur.islands) {
                rep.converged = true;
                return rep;
            }
        }
        prev = cur;
        res *= 2;
    }
}

// Coarse count for coordinate-product maps (both factors 1-variable): in the
// small-delta regime every component of {|f| <= delta} around a zero pair is
// the product of two 1-d blobs, so the count is the number of zero pairs
// inside B_r. Zeros come from the winding-number locator, not a closed form.
inline std::int64_t product_pair_count(const EntireMap& factor1, const EntireMap& factor2, double r) {
    auto locate_in_disk = [&](const EntireMap& f) {
        double pad = 0.002 * r + 1e-3;
        auto res = locate_zeros(f, {-r - pad, -r - pad, r + pad, r + pad});
        if (!res.complete) throw grid::grid_error("product_pair_count: zero location incomplete");
        std::vector<std::complex<double>> pts;
        for (auto& z : res.zeros)
            if (std::abs(z.location) <= r) pts.push_back(z.location);
        return pts;
    };
    auto z1 = locate_in_disk(factor1);
    auto z2 = locate_in_disk(factor2);
    std::int64_t count = 0;
    for (auto& a : z1)
        for (auto& b : z2)
            if (std::norm(a) + std::norm(b) <= r * r) ++count;
    return count;
}

}  // namespace cobez::zeros
