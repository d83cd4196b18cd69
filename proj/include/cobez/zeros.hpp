#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cobez/maps.hpp"
#include "cobez/parallel.hpp"
#include "cobez/xnum.hpp"

namespace cobez::zeros {

using maps::EntireMap;
using xnum::LogComplex;

class contour_error : public std::runtime_error {
public:
    explicit contour_error(const std::string& msg) : std::runtime_error("contour unsafe: " + msg) {}
};

struct Zero {
    std::complex<double> location;
    int multiplicity = 1;
    double residual = 0.0;  // |f| at the polished location
};

struct Rect {
    double x0, y0, x1, y1;

    double cx() const { return 0.5 * (x0 + x1); }
    double cy() const { return 0.5 * (y0 + y1); }
    double diam() const { return std::hypot(x1 - x0, y1 - y0); }
    bool contains(std::complex<double> z, double slack = 0.0) const {
        return z.real() >= x0 - slack && z.real() <= x1 + slack && z.imag() >= y0 - slack &&
               z.imag() <= y1 + slack;
    }
};

namespace detail {

struct Sample {
    double re, im;     // mantissa of f at the point
    double log2_abs;   // log2 |f|
};

inline Sample eval_at(const EntireMap& f, double x, double y) {
    LogComplex v = f.eval1(xnum::from_complex(x, y));
    if (v.is_zero()) throw contour_error("f vanishes at a contour sample");
    return {v.re, v.im, xnum::log2_abs(v)};
}

// Principal argument of b/a from the mantissas; exponents cancel.
inline double delta_arg(const Sample& a, const Sample& b) {
    double cross = a.re * b.im - a.im * b.re;
    double dot = a.re * b.re + a.im * b.im;
    return std::atan2(cross, dot);
}

struct WindingAcc {
    double total = 0.0;
    std::int64_t evals = 0;
    double min_log2 = std::numeric_limits<double>::infinity();
};

inline constexpr double kMaxStepArg = 1.5607;  // just under pi/2
inline constexpr int kMaxSegmentDepth = 42;
inline constexpr std::int64_t kMaxContourEvals = std::int64_t(1) << 21;

struct EdgePoint {
    double x, y;
};

// log2 |f'/f| at the point; the argument of f can swing by at most about
// |f'/f| * len along a segment of length len.
inline double log2_logderiv(const EntireMap& f, double x, double y) {
    LogComplex z = xnum::from_complex(x, y);
    LogComplex fv = f.eval1(z);
    if (fv.is_zero()) throw contour_error("f vanishes at a contour sample");
    LogComplex dv;
    {
        std::vector<LogComplex> pt = {z};
        dv = f.jacobian(pt)[0];
    }
    return xnum::log2_abs(dv) - xnum::log2_abs(fv);
}

// A segment is accepted only when (a) the midpoint logarithmic derivative
// bounds the possible argument swing below ~pi/2, (b) both halves measure
// below pi/2, and (c) the midpoint-split sum agrees with the endpoint
// measurement. The principal value between two samples aliases full turns;
// (a) and (c) together detect them.
inline void refine_segment(const EntireMap& f, EdgePoint p0, const Sample& v0, EdgePoint p1,
                           const Sample& v1, int depth, WindingAcc& acc) {
    if (depth >= kMaxSegmentDepth || acc.evals >= kMaxContourEvals)
        throw contour_error("argument step did not settle under refinement");
    EdgePoint mid{0.5 * (p0.x + p1.x), 0.5 * (p0.y + p1.y)};
    Sample vm = eval_at(f, mid.x, mid.y);
    ++acc.evals;
    double d_full = delta_arg(v0, v1);
    double d0 = delta_arg(v0, vm);
    double d1 = delta_arg(vm, v1);
    double len = std::hypot(p1.x - p0.x, p1.y - p0.y);
    bool swing_ok = log2_logderiv(f, mid.x, mid.y) + std::log2(len) < 0.26;  // ~log2(1.2)
    if (swing_ok && std::fabs(d0) < kMaxStepArg && std::fabs(d1) < kMaxStepArg &&
        std::fabs(d0 + d1 - d_full) < 1e-6) {
        acc.total += d0 + d1;
        acc.min_log2 = std::min({acc.min_log2, v0.log2_abs, vm.log2_abs, v1.log2_abs});
        return;
    }
    refine_segment(f, p0, v0, mid, vm, depth + 1, acc);
    refine_segment(f, mid, vm, p1, v1, depth + 1, acc);
}

}  // namespace detail

// Zeros (with multiplicity) of a 1-variable analytic map enclosed by the
// rectangle boundary, via the argument principle. Adaptive: argument steps are
// kept below pi/2, refining until they settle.
inline int winding_number(const EntireMap& f, const Rect& rect, int init_per_edge = 4) {
    if (f.dim_in() != 1 || f.dim_out() != 1)
        throw maps::config_error("winding_number needs a 1-variable scalar map");
    if (!(rect.x1 > rect.x0) || !(rect.y1 > rect.y0))
        throw maps::config_error("winding_number needs a nondegenerate rectangle");
    std::vector<detail::EdgePoint> pts;
    auto push_edge = [&](double ax, double ay, double bx, double by) {
        for (int k = 0; k < init_per_edge; ++k) {
            double t = static_cast<double>(k) / init_per_edge;
            pts.push_back({ax + t * (bx - ax), ay + t * (by - ay)});
        }
    };
    push_edge(rect.x0, rect.y0, rect.x1, rect.y0);
    push_edge(rect.x1, rect.y0, rect.x1, rect.y1);
    push_edge(rect.x1, rect.y1, rect.x0, rect.y1);
    push_edge(rect.x0, rect.y1, rect.x0, rect.y0);

    std::vector<detail::Sample> vals;
    vals.reserve(pts.size());
    for (auto& p : pts) vals.push_back(detail::eval_at(f, p.x, p.y));

    detail::WindingAcc acc;
    acc.evals = static_cast<std::int64_t>(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        std::size_t nk = (k + 1) % pts.size();
        detail::refine_segment(f, pts[k], vals[k], pts[nk], vals[nk], 0, acc);
    }
    const double two_pi = 2.0 * std::acos(-1.0);
    double turns = acc.total / two_pi;
    long long w = std::llround(turns);
    if (std::fabs(turns - static_cast<double>(w)) > 0.25)
        throw contour_error("total argument change is far from an integer");
    return static_cast<int>(w);
}

struct LocateResult {
    std::vector<Zero> zeros;
    bool complete = true;  // false when the depth cap left winding unresolved
};

namespace detail {

// Split fractions tried when a cut line lands on (or too near) a zero.
inline constexpr double kSplitFrac[] = {0.5, 0.53771, 0.46093, 0.51533, 0.42871};

inline std::optional<Zero> polish(const EntireMap& f, const Rect& box, int mult) {
    std::complex<double> z(box.cx(), box.cy());
    double start_log2 = -std::numeric_limits<double>::infinity();
    {
        LogComplex v0 = f.eval1(xnum::from_complex(z.real(), z.imag()));
        start_log2 = xnum::log2_abs(v0);
    }
    double best = std::numeric_limits<double>::infinity();
    std::complex<double> best_z = z;
    for (int it = 0; it < 80; ++it) {
        LogComplex vz = f.eval1(xnum::from_complex(z.real(), z.imag()));
        std::complex<double> fv = xnum::to_complex(vz);
        double av = std::abs(fv);
        if (av < best) {
            best = av;
            best_z = z;
        }
        if (vz.is_zero()) return Zero{z, mult, 0.0};
        std::vector<LogComplex> pt = {xnum::from_complex(z.real(), z.imag())};
        std::complex<double> dv = xnum::to_complex(f.jacobian(pt)[0]);
        if (!(std::abs(dv) > 0.0) || !std::isfinite(std::abs(dv))) {
            z += std::complex<double>(1e-3 * (box.x1 - box.x0), 7e-4 * (box.y1 - box.y0));
            continue;
        }
        std::complex<double> step = -static_cast<double>(mult) * fv / dv;
        double cap = 2.0 * box.diam();
        if (std::abs(step) > cap) step *= cap / std::abs(step);
        // damped: accept the first halving that reduces |f|
        std::complex<double> zn = z + step;
        for (int h = 0; h < 12; ++h) {
            std::complex<double> fn =
                xnum::to_complex(f.eval1(xnum::from_complex(zn.real(), zn.imag())));
            if (std::abs(fn) < av) break;
            step *= 0.5;
            zn = z + step;
        }
        if (std::abs(zn - z) < 1e-15 * (1.0 + std::abs(z))) {
            z = zn;
            break;
        }
        z = zn;
    }
    LogComplex vf = f.eval1(xnum::from_complex(best_z.real(), best_z.imag()));
    double final_log2 = xnum::log2_abs(vf);
    bool converged = vf.is_zero() || final_log2 < start_log2 - 35.0 ||
                     final_log2 < std::log2(1.0 + std::abs(best_z)) - 100.0;
    if (!converged) return std::nullopt;
    if (!box.contains(best_z, 0.6 * box.diam())) return std::nullopt;
    return Zero{best_z, mult, vf.is_zero() ? 0.0 : std::exp2(final_log2)};
}

// Small verification contour centered at a polished zero.
inline std::optional<int> verify_winding(const EntireMap& f, std::complex<double> z, double radius) {
    for (double scale : {1.0, 1.7, 0.61, 2.9}) {
        double h = radius * scale;
        Rect r{z.real() - h, z.imag() - h, z.real() + h, z.imag() + h};
        try {
            return winding_number(f, r);
        } catch (const contour_error&) {
            continue;
        }
    }
    return std::nullopt;
}

// Raised when a zero sits on a cut line and its multiplicity got split
// between siblings (possible when the phase is locally constant along the
// cut, e.g. z^2 cut through the origin). The parent retries another cut.
struct cut_conflict {
    std::complex<double> at;
};

struct Explorer {
    const EntireMap& f;
    int max_depth;
    std::vector<Zero> zeros;
    bool complete = true;

    void explore(const Rect& box, int w, int depth) {
        if (w <= 0) {
            if (w < 0) complete = false;  // poles cannot happen for entire maps
            return;
        }
        double scale = 1.0 + std::hypot(box.cx(), box.cy());
        bool tiny = box.diam() <= 1e-8 * scale;
        bool can_try_polish = box.diam() <= 0.35 * scale;
        if (tiny || depth >= max_depth || can_try_polish) {
            if (auto z = polish(f, box, w)) {
                // Radius reflects polish precision, not box size: clusters wider
                // than ~4e-8 * scale must verify as distinct zeros.
                double vr = 4e-8 * (1.0 + std::abs(z->location));
                auto wv = verify_winding(f, z->location, vr);
                if (wv && *wv == w) {
                    zeros.push_back(*z);
                    return;
                }
                if (wv && *wv != w && near_boundary(box, z->location)) throw cut_conflict{z->location};
                // interior cluster: several zeros share the box; fall through to split
            }
            if (tiny || depth >= max_depth) {
                complete = false;
                return;
            }
        }
        subdivide(box, w, depth);
    }

    static bool near_boundary(const Rect& box, std::complex<double> z) {
        double eps = 0.02 * std::min(box.x1 - box.x0, box.y1 - box.y0);
        double d = std::min({std::fabs(z.real() - box.x0), std::fabs(z.real() - box.x1),
                             std::fabs(z.imag() - box.y0), std::fabs(z.imag() - box.y1)});
        return d < eps;
    }

    void subdivide(const Rect& box, int w, int depth) {
        for (double fx : kSplitFrac) {
            for (double fy : kSplitFrac) {
                double mx = box.x0 + fx * (box.x1 - box.x0);
                double my = box.y0 + fy * (box.y1 - box.y0);
                Rect kids[4] = {
                    {box.x0, box.y0, mx, my},
                    {mx, box.y0, box.x1, my},
                    {box.x0, my, mx, box.y1},
                    {mx, my, box.x1, box.y1},
                };
                int ws[4];
                int sum = 0;
                bool ok = true;
                for (int k = 0; k < 4 && ok; ++k) {
                    try {
                        ws[k] = winding_number(f, kids[k]);
                        sum += ws[k];
                    } catch (const contour_error&) {
                        ok = false;
                    }
                }
                if (!ok || sum != w) continue;  // a cut line grazed a zero; try other fractions
                std::size_t mark = zeros.size();
                try {
                    for (int k = 0; k < 4; ++k) explore(kids[k], ws[k], depth + 1);
                    return;
                } catch (const cut_conflict& c) {
                    zeros.resize(mark);  // discard partial findings of the bad cut
                    if (!near_boundary_of_cut(c.at, mx, my, box)) throw;  // not our cut
                }
            }
        }
        complete = false;  // could not find a safe cut
    }

    static bool near_boundary_of_cut(std::complex<double> z, double mx, double my, const Rect& box) {
        double eps = 0.05 * std::min(box.x1 - box.x0, box.y1 - box.y0);
        return std::fabs(z.real() - mx) < eps || std::fabs(z.imag() - my) < eps;
    }
};

}  // namespace detail

// Recursive quadrisection guided by winding numbers, with damped-Newton
// polishing from box centers. Multiplicity is the final box winding.
inline LocateResult locate_zeros(const EntireMap& f, Rect region, int max_depth = 46) {
    int w = -1;
    bool got = false;
    // The region boundary must avoid zeros; nudge it slightly if needed.
    for (double grow : {0.0, 9.1e-7, -1.7e-6, 3.3e-6, -6.9e-6, 1.3e-5}) {
        Rect r = region;
        double gx = grow * (region.x1 - region.x0), gy = grow * (region.y1 - region.y0);
        r.x0 -= gx;
        r.x1 += gx;
        r.y0 -= gy;
        r.y1 += gy;
        try {
            w = winding_number(f, r);
            region = r;
            got = true;
            break;
        } catch (const contour_error&) {
            continue;
        }
    }
    if (!got) throw contour_error("region boundary could not be made safe");
    detail::Explorer ex{f, max_depth};
    try {
        ex.explore(region, w, 0);
    } catch (const detail::cut_conflict&) {
        ex.complete = false;  // a zero on the region boundary resisted every cut
    }
    std::sort(ex.zeros.begin(), ex.zeros.end(), [](const Zero& a, const Zero& b) {
        if (a.location.real() != b.location.real()) return a.location.real() < b.location.real();
        return a.location.imag() < b.location.imag();
    });
    return {std::move(ex.zeros), ex.complete};
}

}  // namespace cobez::zeros
