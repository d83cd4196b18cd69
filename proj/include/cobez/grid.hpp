#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cobez/maps.hpp"
#include "cobez/parallel.hpp"
#include "cobez/zeros.hpp"

namespace cobez::grid {

using maps::EntireMap;
using xnum::LogComplex;

class grid_error : public std::runtime_error {
public:
    explicit grid_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr std::int64_t kMaxCells = std::int64_t(1) << 28;
inline constexpr int kMinRes = 16;

// Sampled |f| over the box [-r, r]^{2n} clipped to the closed ball B_r.
// Cell values are log2 |f| at the cell center; a cell belongs to B_r iff its
// center does; the mask is log2|f| <= log2_delta (ties inside, closed ball).
class SublevelGrid {
public:
    int n = 1;          // complex dimension
    int res = 0;        // cells per axis (2n axes)
    double r = 0.0;
    double log2_delta = 0.0;
    std::vector<double> values;  // log2 |f| at centers, axis 0 fastest

    int axes() const { return 2 * n; }
    double cell_size() const { return 2.0 * r / res; }
    double diag() const { return cell_size() * std::sqrt(static_cast<double>(axes())); }

    std::int64_t cell_count() const {
        std::int64_t c = 1;
        for (int a = 0; a < axes(); ++a) c *= res;
        return c;
    }

    double center(int idx) const { return -r + (idx + 0.5) * cell_size(); }

    void coords(std::int64_t cell, int* out) const {
        for (int a = 0; a < axes(); ++a) {
            out[a] = static_cast<int>(cell % res);
            cell /= res;
        }
    }

    double center_norm2(const int* c) const {
        double s = 0.0;
        for (int a = 0; a < axes(); ++a) {
            double x = center(c[a]);
            s += x * x;
        }
        return s;
    }

    bool inside_ball(const int* c) const { return center_norm2(c) <= r * r; }

    bool masked_value(std::int64_t cell, const int* c) const {
        return inside_ball(c) && values[static_cast<std::size_t>(cell)] <= log2_delta;
    }

    // Cell containing the point (coordinates in R^{2n}); -1 outside the box.
    std::int64_t cell_of(const double* x) const {
        std::int64_t cell = 0, stride = 1;
        for (int a = 0; a < axes(); ++a) {
            double t = (x[a] + r) / cell_size();
            auto idx = static_cast<std::int64_t>(std::floor(t));
            if (idx < 0 || idx >= res) return -1;
            cell += idx * stride;
            stride *= res;
        }
        return cell;
    }
};

inline SublevelGrid sample_sublevel_log2(const EntireMap& map, double r, double log2_delta, int res) {
    if (map.dim_in() > 2) throw grid_error("full grids support n <= 2");
    if (res < kMinRes) throw grid_error("resolution below minimum (16)");
    if (!(r > 0.0)) throw grid_error("radius must be positive");
    SublevelGrid g;
    g.n = map.dim_in();
    g.res = res;
    g.r = r;
    g.log2_delta = log2_delta;
    std::int64_t cells = 1;
    for (int a = 0; a < g.axes(); ++a) {
        cells *= res;
        if (cells > kMaxCells) throw grid_error("cell cap (2^28) exceeded");
    }
    g.values.assign(static_cast<std::size_t>(cells), std::numeric_limits<double>::infinity());
    const int axes = g.axes();
    const std::int64_t block = std::max<std::int64_t>(4096, cells / (par::thread_count() * 8) + 1);
    par::for_ranges(cells, block, [&](std::int64_t lo, std::int64_t hi) {
        int c[4] = {0, 0, 0, 0};
        g.coords(lo, c);
        std::vector<LogComplex> pt(static_cast<std::size_t>(g.n));
        for (std::int64_t cell = lo; cell < hi; ++cell) {
            if (g.inside_ball(c)) {
                for (int k = 0; k < g.n; ++k)
                    pt[static_cast<std::size_t>(k)] =
                        xnum::from_complex(g.center(c[2 * k]), g.center(c[2 * k + 1]));
                g.values[static_cast<std::size_t>(cell)] = map.log2_norm(pt);
            }
            for (int a = 0; a < axes; ++a) {  // odometer
                if (++c[a] < res) break;
                c[a] = 0;
            }
        }
    });
    return g;
}

inline SublevelGrid sample_sublevel(const EntireMap& map, double r, double delta, int res) {
    if (!(delta > 0.0)) throw grid_error("delta must be positive");
    return sample_sublevel_log2(map, r, std::log2(delta), res);
}

struct Component {
    std::vector<std::int64_t> cells;  // ascending
    bool touches_sphere = false;      // some member cell within one cell-diagonal of S_r
    std::array<double, 4> bbox_lo{}, bbox_hi{};
    std::vector<int> zero_ids;        // indices into the zero list used for attachment

    bool is_island() const { return !touches_sphere; }
};

struct ComponentSet {
    std::vector<Component> components;  // ordered by smallest member cell
};

// Union-find labeling under face adjacency; labels are deterministic
// (components ordered by their lexicographically smallest cell).
inline ComponentSet components(const SublevelGrid& g) {
    const std::int64_t cells = g.cell_count();
    std::vector<std::int32_t> parent(static_cast<std::size_t>(cells), -1);
    auto find = [&](std::int32_t x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    const int axes = g.axes();
    std::int64_t stride[4] = {1, 0, 0, 0};
    for (int a = 1; a < axes; ++a) stride[a] = stride[a - 1] * g.res;
    {
        int c[4] = {0, 0, 0, 0};
        for (std::int64_t cell = 0; cell < cells; ++cell) {
            if (g.masked_value(cell, c)) {
                auto cc = static_cast<std::int32_t>(cell);
                parent[static_cast<std::size_t>(cell)] = cc;
                for (int a = 0; a < axes; ++a) {
                    if (c[a] == 0) continue;
                    std::int64_t prev = cell - stride[a];
                    if (parent[static_cast<std::size_t>(prev)] < 0) continue;
                    std::int32_t ra = find(cc), rb = find(static_cast<std::int32_t>(prev));
                    if (ra != rb) parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
                }
            }
            for (int a = 0; a < axes; ++a) {
                if (++c[a] < g.res) break;
                c[a] = 0;
            }
        }
    }
    // gather, ordered by root (= smallest cell in component)
    std::vector<std::int32_t> root_order;
    std::vector<std::int32_t> root_label(static_cast<std::size_t>(cells), -1);
    ComponentSet out;
    double guard = g.r - g.diag();
    int c[4] = {0, 0, 0, 0};
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        if (parent[static_cast<std::size_t>(cell)] >= 0) {
            std::int32_t root = find(static_cast<std::int32_t>(cell));
            std::int32_t label = root_label[static_cast<std::size_t>(root)];
            if (label < 0) {
                label = static_cast<std::int32_t>(out.components.size());
                root_label[static_cast<std::size_t>(root)] = label;
                out.components.emplace_back();
                auto& comp = out.components.back();
                for (int a = 0; a < 4; ++a) {
                    comp.bbox_lo[static_cast<std::size_t>(a)] = std::numeric_limits<double>::infinity();
                    comp.bbox_hi[static_cast<std::size_t>(a)] = -std::numeric_limits<double>::infinity();
                }
            }
            auto& comp = out.components[static_cast<std::size_t>(label)];
            comp.cells.push_back(cell);
            double norm2 = g.center_norm2(c);
            if (std::sqrt(norm2) >= guard) comp.touches_sphere = true;
            for (int a = 0; a < g.axes(); ++a) {
                double x = g.center(c[a]);
                comp.bbox_lo[static_cast<std::size_t>(a)] = std::min(comp.bbox_lo[static_cast<std::size_t>(a)], x);
                comp.bbox_hi[static_cast<std::size_t>(a)] = std::max(comp.bbox_hi[static_cast<std::size_t>(a)], x);
            }
        }
        for (int a = 0; a < axes; ++a) {
            if (++c[a] < g.res) break;
            c[a] = 0;
        }
    }
    return out;
}

// Attaches zeros (points in C^n as 2n real coordinates) to components.
// Returns, for each zero, the component index or -1.
inline std::vector<int> attach_zeros(const SublevelGrid& g, ComponentSet& comps,
                                     const std::vector<std::vector<std::complex<double>>>& zeros_pts) {
    // cell -> component index
    std::vector<int> result;
    result.reserve(zeros_pts.size());
    // build a lookup only for masked cells (component cells are sorted)
    auto component_of_cell = [&](std::int64_t cell) -> int {
        for (std::size_t ci = 0; ci < comps.components.size(); ++ci) {
            const auto& cs = comps.components[ci].cells;
            if (std::binary_search(cs.begin(), cs.end(), cell)) return static_cast<int>(ci);
        }
        return -1;
    };
    for (std::size_t zi = 0; zi < zeros_pts.size(); ++zi) {
        const auto& zp = zeros_pts[zi];
        double x[4] = {0, 0, 0, 0};
        for (int k = 0; k < g.n; ++k) {
            x[2 * k] = zp[static_cast<std::size_t>(k)].real();
            x[2 * k + 1] = zp[static_cast<std::size_t>(k)].imag();
        }
        std::int64_t cell = g.cell_of(x);
        int found = (cell >= 0) ? component_of_cell(cell) : -1;
        if (found < 0) {
            // A zero exactly on a cell edge can land in an unmasked cell while
            // its component occupies the neighboring one; scan the immediate
            // neighborhood in deterministic cell order.
            int base[4];
            if (cell >= 0) {
                g.coords(cell, base);
                std::int64_t stride[4] = {1, 0, 0, 0};
                for (int a = 1; a < g.axes(); ++a) stride[a] = stride[a - 1] * g.res;
                int offsets = 1;
                for (int a = 0; a < g.axes(); ++a) offsets *= 3;
                std::vector<std::int64_t> nbrs;
                for (int o = 0; o < offsets; ++o) {
                    std::int64_t nb = cell;
                    int oo = o;
                    bool okcell = true;
                    for (int a = 0; a < g.axes(); ++a) {
                        int d = oo % 3 - 1;
                        oo /= 3;
                        int idx = base[a] + d;
                        if (idx < 0 || idx >= g.res) {
                            okcell = false;
                            break;
                        }
                        nb += d * stride[a];
                    }
                    if (okcell && nb != cell) nbrs.push_back(nb);
                }
                std::sort(nbrs.begin(), nbrs.end());
                for (std::int64_t nb : nbrs) {
                    found = component_of_cell(nb);
                    if (found >= 0) break;
                }
            }
        }
        if (found >= 0) comps.components[static_cast<std::size_t>(found)].zero_ids.push_back(static_cast<int>(zi));
        result.push_back(found);
    }
    return result;
}

struct CountReport {
    std::int64_t zeta = 0;
    std::int64_t zeta0 = 0;
    std::optional<std::int64_t> tau;
    std::optional<std::int64_t> n_delta;
    bool converged = false;
    std::vector<int> resolutions;
    std::vector<std::pair<std::string, bool>> verdicts;
};

namespace detail {

struct Counts {
    std::int64_t zeta = 0, zeta0 = 0;
};

inline Counts count_on_grid(const SublevelGrid& g,
                            const std::vector<std::vector<std::complex<double>>>& zero_pts) {
    ComponentSet comps = components(g);
    attach_zeros(g, comps, zero_pts);
    Counts c;
    for (auto& comp : comps.components) {
        if (!comp.zero_ids.empty()) {
            ++c.zeta;
            if (comp.is_island()) ++c.zeta0;
        }
    }
    return c;
}

}  // namespace detail

// Zeros used for attachment: the zeros module for one-variable maps,
// built-in zero lists otherwise.
inline std::vector<std::vector<std::complex<double>>> zeros_for_counting(const EntireMap& map, double r) {
    if (map.dim_in() == 1 && map.dim_out() == 1) {
        double pad = 0.01 * r + 1e-3;
        auto res = zeros::locate_zeros(map, {-r - pad, -r - pad, r + pad, r + pad});
        if (!res.complete) throw grid_error("zero location incomplete; cannot certify counts");
        std::vector<std::vector<std::complex<double>>> pts;
        for (auto& z : res.zeros)
            if (std::abs(z.location) <= r * (1.0 + 1e-12)) pts.push_back({z.location});
        return pts;
    }
    auto list = map.zero_list(r);
    if (!list) throw grid_error("map has no locatable zeros (n > 1 and no built-in zero list)");
    return *list;
}

// zeta / zeta0 with the resolution-doubling convergence flag: converged means
// the counts are identical at res and 2*res.
inline CountReport coarse_count_with_zeros(const EntireMap& map, double r, double delta, int res_start,
                                           const std::vector<std::vector<std::complex<double>>>& zero_pts) {
    if (!(delta > 0.0)) throw grid_error("delta must be positive");
    CountReport rep;
    int res = res_start;
    std::optional<detail::Counts> prev;
    for (;;) {
        double cells_next = std::pow(static_cast<double>(res), 2.0 * map.dim_in());
        if (cells_next > static_cast<double>(kMaxCells)) {
            rep.converged = false;
            return rep;  // counts from the last completed level remain
        }
        SublevelGrid g = sample_sublevel(map, r, delta, res);
        detail::Counts cur = detail::count_on_grid(g, zero_pts);
        rep.resolutions.push_back(res);
        rep.zeta = cur.zeta;
        rep.zeta0 = cur.zeta0;
        if (prev && prev->zeta == cur.zeta && prev->zeta0 == cur.zeta0) {
            rep.converged = true;
            return rep;
        }
        prev = cur;
        res *= 2;
    }
}

inline CountReport coarse_count(const EntireMap& map, double r, double delta, int res_start) {
    return coarse_count_with_zeros(map, r, delta, res_start, zeros_for_counting(map, r));
}

// Raw mask dump: flat binary, one byte per cell (1 = masked), axis 0 fastest
// (little-endian cell order as indexed), with a JSON sidecar.
inline void dump_mask(const SublevelGrid& g, const std::string& bin_path, const std::string& json_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw grid_error("cannot open " + bin_path);
    const std::int64_t cells = g.cell_count();
    int c[4] = {0, 0, 0, 0};
    std::vector<char> buf(static_cast<std::size_t>(cells));
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        buf[static_cast<std::size_t>(cell)] = g.masked_value(cell, c) ? 1 : 0;
        for (int a = 0; a < g.axes(); ++a) {
            if (++c[a] < g.res) break;
            c[a] = 0;
        }
    }
    bin.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    nlohmann::json side;
    side["schema"] = "cobez-mask-v1";
    side["n"] = g.n;
    side["res"] = g.res;
    side["r"] = g.r;
    side["log2_delta"] = g.log2_delta;
    side["region"] = {{"lo", -g.r}, {"hi", g.r}};
    side["cell_order"] = "axis0-fastest";
    std::ofstream js(json_path);
    js << side.dump(2) << "\n";
}

}  // namespace cobez::grid
