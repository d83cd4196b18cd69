#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cobez/grid.hpp"
#include "cobez/maps.hpp"

namespace cobez::csverify {

using maps::CSParams;
using maps::EntireMap;
using xnum::LogComplex;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// log2 C_0, C_0 = (1/2) prod_{i>=1} (1 - 3 2^{-(i+1)}); partial product to
// i = 200, tail below 2^-197.
inline double log2_c0() {
    static const double v = [] {
        double s = -1.0;
        for (int i = 1; i <= 200; ++i) s += std::log2(1.0 - 3.0 * std::ldexp(1.0, -(i + 1)));
        return s;
    }();
    return v;
}

// Structure thresholds for a fixed delta:
//   k_merge: from this slice on, the whole interval {2^i} x [0,1] lies in the
//            sublevel set (zeros of a slice merge into one coarse zero);
//   k_sep:   from this hyperplane index on, Re z = 2^k + 2^{k-1} is clean
//            (|F| > delta on it), so consecutive slices cannot merge.
struct CSStructure {
    CSParams params;
    double delta = 0.0;
    std::int64_t k_merge = 0;
    std::int64_t k_sep = 0;
    double log2_C0 = 0.0;
};

inline CSStructure cs_structure(double delta, CSParams params = {}) {
    if (!(delta > 0.0)) throw maps::config_error("cs_structure needs delta > 0");
    CSStructure s;
    s.params = std::move(params);
    s.delta = delta;
    s.log2_C0 = log2_c0();
    double ld = std::log2(delta);
    s.k_merge = 1;
    while (-0.5 * static_cast<double>(s.k_merge) * static_cast<double>(s.k_merge + 1) > ld) {
        ++s.k_merge;
        if (s.k_merge > (1 << 20)) throw maps::config_error("delta too small for k_merge");
    }
    s.k_sep = 1;
    while (!(s.log2_C0 + 0.5 * static_cast<double>(s.k_sep - 1) * static_cast<double>(s.k_sep) > ld)) {
        ++s.k_sep;
        if (s.k_sep > (1 << 20)) throw maps::config_error("delta too large for k_sep");
    }
    return s;
}

// log2 of the elongation bound b_i = 2^{c_i - (i-1)i/(2 c_i)} delta^{1/c_i}.
inline double log2_b(std::int64_t i, double delta, const CSParams& params) {
    double c = params.c.c(i);
    double id = static_cast<double>(i);
    return c - (id - 1.0) * id / (2.0 * c) + std::log2(delta) / c;
}

struct IntervalReport {
    std::int64_t i = 0;
    bool hypothesis_holds = false;  // delta >= 2^{(i-1)i/2 - c_i^2}
    double log2_b = 0.0;
    bool samples_run = false;
    bool samples_ok = false;  // |F| <= delta along {2^i} x [0, min(b_i, 2^20)]
};

// Lemma: when delta >= 2^{(i-1)i/2 - c_i^2}, the interval
// {2^i} x [0, b_i] lies inside {|F| <= delta}.
inline IntervalReport interval_containment(std::int64_t i, double delta, const CSParams& params) {
    if (i < 1) throw maps::config_error("interval_containment needs i >= 1");
    IntervalReport rep;
    rep.i = i;
    double c = params.c.c(i);
    if (std::isnan(c)) throw maps::config_error("c-sequence not defined at this index");
    double id = static_cast<double>(i);
    rep.hypothesis_holds = std::log2(delta) >= (id - 1.0) * id / 2.0 - c * c;
    rep.log2_b = log2_b(i, delta, params);
    if (rep.hypothesis_holds && c <= 65536.0) {
        rep.samples_run = true;
        rep.samples_ok = true;
        EntireMap F = maps::cs_F_map(params);
        double wmax = std::exp2(std::min(rep.log2_b, 20.0));
        LogComplex z = xnum::from_double(std::ldexp(1.0, static_cast<int>(i)));
        for (int t = 0; t < 64; ++t) {
            double w = wmax * static_cast<double>(t) / 63.0;
            std::vector<LogComplex> pt = {z, xnum::from_double(w)};
            double l2 = F.log2_norm(pt);
            if (!(l2 <= std::log2(delta) + 1e-6)) rep.samples_ok = false;
        }
    }
    return rep;
}

struct SeparationReport {
    std::int64_t k = 0;
    bool analytic = false;       // C_0 2^{(k-1)k/2} > delta
    double log2_minorant = 0.0;  // certified lower bound on prod |1 - x 2^-i| at x = 3*2^{k-1}
    bool minorant_exceeds_delta = false;
    bool samples_run = false;
    bool samples_ok = false;  // sampled |F| > delta on the hyperplane
};

// Hyperplane Re z = 2^k + 2^{k-1} is clean when C_0 2^{(k-1)k/2} > delta; the
// proof chain |F| >= |g(z)| >= prod |1 - 2^-i Re z| is checked via the 1-d
// minorant h(x) and by sampling F itself.
inline SeparationReport separation_check(std::int64_t k, double delta, int samples = 64,
                                         const CSParams& params = {}) {
    if (k < 1) throw maps::config_error("separation_check needs k >= 1");
    SeparationReport rep;
    rep.k = k;
    double ld = std::log2(delta);
    rep.analytic = log2_c0() + 0.5 * static_cast<double>(k - 1) * static_cast<double>(k) > ld;
    // h(x) at x = 3*2^{k-1}: factors 3*2^{k-1-i} - 1 (i < k), 1/2 (i = k),
    // 1 - 3*2^{-(j+1)} (i = k + j), certified tail
    double s = -1.0;
    for (std::int64_t i = 1; i < k; ++i) {
        std::int64_t m = k - 1 - i;
        if (m <= 40)
            s += std::log2(3.0 * std::ldexp(1.0, static_cast<int>(m)) - 1.0);
        else
            s += std::log2(3.0) + static_cast<double>(m) +
                 std::log1p(-1.0 / (3.0 * std::ldexp(1.0, static_cast<int>(m)))) / std::numbers::ln2;
    }
    for (int j = 1; j <= 200; ++j) s += std::log2(1.0 - 3.0 * std::ldexp(1.0, -(j + 1)));
    s += std::log1p(-3.0 * std::ldexp(1.0, -200)) / std::numbers::ln2;  // tail, lower bound
    rep.log2_minorant = s;
    rep.minorant_exceeds_delta = s > ld;
    if (rep.analytic && k <= 40) {
        rep.samples_run = true;
        rep.samples_ok = true;
        EntireMap F = maps::cs_F_map(params);
        double x = std::ldexp(3.0, static_cast<int>(k - 1));
        auto frac = [](double v) { return v - std::floor(v); };
        for (int t = 0; t < samples; ++t) {
            double y = (frac(t * 0.6180339887498949) - 0.5) * std::ldexp(2.0, static_cast<int>(k));
            double wre = (frac(t * 0.4142135623730951 + 0.2) - 0.5) * std::ldexp(2.0, static_cast<int>(k));
            double wim = (frac(t * 0.3247179572447458 + 0.7) - 0.5) * 2.0;
            std::vector<LogComplex> pt = {xnum::from_complex(x, y), xnum::from_complex(wre, wim)};
            if (!(F.log2_norm(pt) > ld)) rep.samples_ok = false;
        }
    }
    return rep;
}

struct ZetaBracket {
    std::int64_t lower = 0;
    std::int64_t upper = 0;
    std::int64_t exact_tail_from = 0;  // slices >= this index contribute exactly 1, provably
    double envelope_lower = 0.0;
    double envelope_upper = 0.0;
    bool inside_envelope = false;
    std::vector<std::string> assumptions;
};

namespace detail {

// Is there at least one zero of slice i inside B_r, i.e. 4^i + 1/c_i^2 <= r^2?
inline bool slice_active(std::int64_t i, double r, const CSParams& params) {
    if (!params.c.in_range(i)) return false;
    long double r2 = static_cast<long double>(r) * r;
    long double x2 = std::pow(2.0L, static_cast<long double>(2 * i));
    if (x2 >= r2) return false;
    double c = params.c.c(i);
    long double w2 = 1.0L / (static_cast<long double>(c) * static_cast<long double>(c));
    return x2 + w2 <= r2;
}

// Number of components of {|P_{c_i}(w)| <= delta_i} in the w-plane slice that
// contain zeros of F inside B_r, via the generic grid engine on the scalar
// reduction |F(2^i, w)| = 2^{-c_i^2} |g_i(2^i)| |P_{c_i}(w)|.
inline std::optional<std::int64_t> slice_grid_count(std::int64_t i, double r, double delta,
                                                    const CSParams& params) {
    std::int64_t c = params.c.c_int(i);
    if (c > 256) return std::nullopt;  // defer to the trivial per-zero upper bound
    double log2_delta_i = std::log2(delta) + static_cast<double>(c) * static_cast<double>(c) -
                          maps::cs_g_skip_log2_at_pow2(i);
    long double r2 = static_cast<long double>(r) * r;
    long double x2 = std::pow(2.0L, static_cast<long double>(2 * i));
    double r_w = static_cast<double>(std::sqrt(std::max(0.0L, r2 - x2)));
    // {|P| <= delta_i} sits inside |w| <= 1 + delta_i^{1/c} (since
    // |P(w)| >= (|w|-1)^c); clip the grid there or at the ball slice radius.
    double log2_reach = log2_delta_i / static_cast<double>(c);
    double reach = (log2_reach > 40.0) ? std::exp2(40.0) : 2.0 + std::exp2(log2_reach);
    double grid_r = std::min(r_w, reach);
    if (!(grid_r > 0.0)) return 0;
    EntireMap P = maps::cs_P_map(c);
    std::vector<std::vector<std::complex<double>>> roots;
    for (std::int64_t j = 1; j <= c; ++j) {
        double w = 1.0 / static_cast<double>(j);
        long double norm2 = x2 + static_cast<long double>(w) * w;
        if (norm2 <= r2) roots.push_back({{w, 0.0}});
    }
    if (roots.empty()) return 0;
    // resolution-doubling convergence on the log2 threshold directly
    // (delta_i can exceed the double range)
    int res = 64;
    std::optional<std::int64_t> prev;
    for (;;) {
        if (std::pow(static_cast<double>(res), 2.0) > static_cast<double>(grid::kMaxCells))
            return std::nullopt;
        grid::SublevelGrid g = grid::sample_sublevel_log2(P, grid_r, log2_delta_i, res);
        grid::ComponentSet comps = grid::components(g);
        grid::attach_zeros(g, comps, roots);
        std::int64_t count = 0;
        for (auto& comp : comps.components)
            if (!comp.zero_ids.empty()) ++count;
        if (prev && *prev == count) return count;
        prev = count;
        res *= 2;
    }
}

}  // namespace detail

// Structural bracket for zeta(F, r, delta):
//  - slices with i >= k_merge contribute exactly one component each (their
//    zeros merge along the interval);
//  - lower slices contribute their per-slice 1-d component count to the upper
//    bound (no cross-slice merges assumed);
//  - the lower bound counts hyperplane-separated groups: slices above k_sep
//    are provably distinct, everything at or below k_sep may merge into one.
inline ZetaBracket zeta_bracket(double r, double delta, const CSParams& params = {}) {
    if (!(r >= 2.0)) throw maps::config_error("zeta_bracket needs r >= 2");
    CSStructure st = cs_structure(delta, params);
    ZetaBracket out;
    std::int64_t i_max = 0;
    for (std::int64_t i = 1; i <= 70; ++i)
        if (detail::slice_active(i, r, params)) i_max = i;
    // upper: sum of per-slice counts
    for (std::int64_t i = 1; i <= i_max; ++i) {
        if (!detail::slice_active(i, r, params)) continue;
        if (i >= st.k_merge) {
            out.upper += 1;
        } else {
            auto cnt = detail::slice_grid_count(i, r, delta, params);
            if (cnt) {
                out.upper += *cnt;
            } else {
                std::int64_t c = params.c.c_int(i);
                out.upper += c;  // one component per zero, trivially
                out.assumptions.push_back("slice " + std::to_string(i) +
                                          ": grid skipped, counted one component per zero");
            }
        }
    }
    // lower: group {1..k_sep} plus singletons above
    bool low_group = false;
    for (std::int64_t i = 1; i <= std::min(st.k_sep, i_max); ++i)
        if (detail::slice_active(i, r, params)) low_group = true;
    out.lower = (low_group ? 1 : 0);
    for (std::int64_t i = st.k_sep + 1; i <= i_max; ++i)
        if (detail::slice_active(i, r, params)) out.lower += 1;
    out.exact_tail_from = std::max(st.k_merge, st.k_sep + 1);
    out.assumptions.push_back("upper assumes no cross-slice merges");
    out.assumptions.push_back("lower merges all slices up to k_sep into one component");
    // envelopes
    double L = std::log2(r);
    double ld = std::log2(delta);
    auto c_prefix_sum = [&](double limit, bool strict) {
        double s = 0.0;
        for (std::int64_t i = 1; i <= 1000; ++i) {
            double id = static_cast<double>(i);
            if (strict ? !(id < limit) : !(id <= limit)) break;
            if (!params.c.in_range(i)) break;
            s += params.c.c(i);
            if (std::isinf(s)) break;
        }
        return s;
    };
    if (delta >= 0.5) {
        out.envelope_upper = L;
    } else if (ld >= -0.5 * L * (L + 1.0)) {
        double sq = std::sqrt(-2.0 * ld);
        out.envelope_upper = L + 2.0 - sq + c_prefix_sum(sq, true);
    } else {
        out.envelope_upper = c_prefix_sum(L, false);
    }
    double lc0 = log2_c0();
    if (ld <= lc0) {
        out.envelope_lower = std::floor(L) - 1.0;
    } else if (ld <= lc0 + 0.5 * L * (L - 1.0)) {
        out.envelope_lower = std::floor(L) - std::sqrt(2.0 * ld - 2.0 * lc0) - 2.0;
    } else {
        out.envelope_lower = 0.0;
    }
    out.inside_envelope = (static_cast<double>(out.lower) >= out.envelope_lower - 1e-9) &&
                          (static_cast<double>(out.upper) <= out.envelope_upper + 1e-9);
    return out;
}

struct Zeta0Report {
    bool applicable = false;
    double upper_bound = kInf;      // proof-assembled bound on zeta^0(F, r, delta)
    std::int64_t i0 = 0;            // stabilization index from the proof
    std::int64_t k = 0;             // last slice with b_k <= r
    double closed_form_m = kInf;    // admissible m at this r
    double closed_form_value = kInf;
    std::string growth_class;
    struct Slice {
        std::int64_t i = 0;
        double log2_b = 0.0;
        bool peninsula_certified = false;  // certified interval exits B_r
    };
    std::vector<Slice> slices;
};

// Island-count analysis for pow-rule sequences: the certified elongation b_i
// turns slices into certified peninsulas, and the proof's bookkeeping yields
// zeta^0 <= sum_{i <= log b_{i0}} c_i - i0 + k with b_k <= r < b_{k+1}.
inline Zeta0Report zeta0_analysis(double r, double delta, const CSParams& params = {}) {
    if (!params.c.is_pow_rule())
        throw maps::config_error("zeta0_analysis needs a pow-rule c-sequence");
    Zeta0Report rep;
    int l = params.c.iterates();
    double lambda = params.c.lambda();
    {
        std::string g = "O(";
        for (int t = 0; t < l + 1; ++t) g += "log ";
        g += "r)";
        rep.growth_class = g;
    }
    // validity floor: r >= exp2 iterated l+1 times at 1
    double floor_r = 1.0;
    for (int t = 0; t < l + 1 && floor_r < 1e300; ++t) floor_r = std::exp2(floor_r);
    if (!(r >= floor_r)) return rep;  // inapplicable
    rep.applicable = true;
    double d = std::min(delta, 1.0);  // zeta^0 is non-increasing in delta
    double ld = std::log2(d);
    // i0: the smallest index from which (1) delta clears both hypothesis
    // thresholds, (2) log2 b_{i0} >= i0, (3) b is increasing. All three are
    // eventually monotone for a pow rule (c_i grows at least geometrically);
    // they are verified on a 64-wide window.
    std::int64_t i0 = 0;
    for (std::int64_t cand = 1; cand <= 256 && i0 == 0; ++cand) {
        bool ok = true;
        double prev_b = -kInf;
        for (std::int64_t i = cand; i < cand + 64 && ok; ++i) {
            double c = params.c.c(i);
            if (std::isinf(c)) break;  // conditions trivial beyond double range
            double id = static_cast<double>(i);
            if (!(ld >= -c)) ok = false;                                 // delta >= 2^-c_i
            if (!(ld >= (id - 1.0) * id / 2.0 - c * c)) ok = false;      // lemma hypothesis
            double lb = log2_b(i, d, params);
            if (i == cand && !(lb >= static_cast<double>(cand))) ok = false;
            if (!(lb > prev_b)) ok = false;
            prev_b = lb;
        }
        if (ok) i0 = cand;
    }
    if (i0 == 0) throw maps::config_error("zeta0_analysis: no stabilization index found");
    rep.i0 = i0;
    double lb_i0 = log2_b(i0, d, params);
    // sum_{1 <= i <= log2 b_{i0}} c_i
    double head = 0.0;
    for (std::int64_t i = 1; static_cast<double>(i) <= lb_i0; ++i) head += params.c.c(i);
    // k: largest slice with b_k <= r (b increasing from i0)
    double lr = std::log2(r);
    if (lb_i0 > lr) {
        rep.k = 0;
        rep.upper_bound = head;  // r <= b_{i0}: no island tail
    } else {
        std::int64_t k = i0;
        while (params.c.in_range(k + 1) && log2_b(k + 1, d, params) <= lr && k < 100000) ++k;
        rep.k = k;
        rep.upper_bound = head - static_cast<double>(i0) + static_cast<double>(k);
    }
    // closed form (1/lambda) log^{(l+1)} r + m with the admissible m at this r
    double iter_log = lr;
    for (int t = 0; t < l; ++t) iter_log = std::log2(std::max(iter_log, 1e-300));
    rep.closed_form_m = rep.upper_bound - iter_log / lambda;
    rep.closed_form_value = iter_log / lambda + rep.closed_form_m;
    // per-slice peninsula verdicts
    for (std::int64_t i = 1; i <= 70; ++i) {
        if (std::ldexp(1.0, static_cast<int>(i)) > r) break;
        if (!params.c.in_range(i)) break;
        double c = params.c.c(i);
        if (std::isnan(c) || std::isinf(c)) break;
        Zeta0Report::Slice s;
        s.i = i;
        s.log2_b = log2_b(i, d, params);
        double id = static_cast<double>(i);
        bool hyp = ld >= (id - 1.0) * id / 2.0 - c * c;
        long double r2 = static_cast<long double>(r) * r;
        long double x2 = std::pow(2.0L, static_cast<long double>(2 * i));
        double rem = static_cast<double>(r2 - x2);
        s.peninsula_certified = hyp && (rem <= 0.0 || 2.0 * s.log2_b > std::log2(rem));
        rep.slices.push_back(s);
    }
    return rep;
}

struct JacobianDecayReport {
    std::int64_t i = 0, j = 0;
    double log2_det = -kInf;  // log2 |det J_F(xi_{i,j})|, closed form in log space
    double rhs_log2 = 0.0;    // -c_i^2 + i^2 - 2i
    bool verdict = false;     // log2_det < rhs
};

// det J_F(xi_{i,j}) = (-2^-i g_i(2^i)) * (2^{-c_i^2} g_i(2^i) prod_{l != j} (1/j - 1/l)).
inline JacobianDecayReport jacobian_decay(std::int64_t i, std::int64_t j, const CSParams& params = {}) {
    if (i < 1) throw maps::config_error("jacobian_decay needs i >= 1");
    std::int64_t c = params.c.c_int(i);
    if (j < 1 || j > c) throw maps::config_error("jacobian_decay needs 1 <= j <= c_i");
    if (c > (std::int64_t(1) << 22)) throw maps::config_error("c_i too large for the closed-form sum");
    JacobianDecayReport rep;
    rep.i = i;
    rep.j = j;
    double g_log = maps::cs_g_skip_log2_at_pow2(i);
    double prod_log = 0.0;
    for (std::int64_t l = 1; l <= c; ++l) {
        if (l == j) continue;
        prod_log += std::log2(static_cast<double>(std::llabs(l - j))) -
                    std::log2(static_cast<double>(j)) - std::log2(static_cast<double>(l));
    }
    double cd = static_cast<double>(c), id = static_cast<double>(i);
    rep.log2_det = -id - cd * cd + 2.0 * g_log + prod_log;
    rep.rhs_log2 = -cd * cd + id * id - 2.0 * id;
    rep.verdict = rep.log2_det < rep.rhs_log2;
    return rep;
}

struct LiTaylorCutoff {
    std::int64_t i_star = 0;  // from this slice on, |det J_F| < c mu(F,|xi|)^{-b} certified
    bool found = false;
};

// Falsification harness for a Li-Taylor style hypothesis: for any fixed
// (c, b) the Jacobian lower bound fails at all but finitely many zeros.
// Certification per slice: log2 |det J_F| (exact closed form, maximized over
// j via prod <= 1) < log2 c - b * log2-upper-bound of mu(F, 2^{i+1}).
inline LiTaylorCutoff li_taylor_cutoff(double c_const, double b, const CSParams& params = {}) {
    if (!(c_const > 0.0) || !(b > 0.0)) throw maps::config_error("li_taylor_cutoff needs c, b > 0");
    LiTaylorCutoff out;
    const double C = 4.0 + maps::log2_prod_one_plus_pow2();
    std::int64_t run_start = 0;
    int run = 0;
    for (std::int64_t i = 1; i <= 256; ++i) {
        if (!params.c.in_range(i)) break;
        double c = params.c.c(i);
        if (std::isinf(c)) {  // beyond double range the decay is immediate
            if (run == 0) run_start = i;
            ++run;
            break;
        }
        double id = static_cast<double>(i);
        double det_up = -id - c * c + 2.0 * maps::cs_g_skip_log2_at_pow2(i);
        double mu_up = 1.5 * (id + 1.0) * (id + 1.0) + 3.5 * (id + 1.0) + C;
        bool holds = det_up < std::log2(c_const) - b * mu_up;
        if (holds) {
            if (run == 0) run_start = i;
            ++run;
            if (run >= 30) {
                out.i_star = run_start;
                out.found = true;
                return out;
            }
        } else {
            run = 0;
        }
    }
    if (run > 0) {
        out.i_star = run_start;
        out.found = true;
    }
    return out;
}

}  // namespace cobez::csverify
