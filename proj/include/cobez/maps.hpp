#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cobez/expr.hpp"
#include "cobez/parallel.hpp"
#include "cobez/xnum.hpp"

namespace cobez::maps {

using xnum::LogComplex;

class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kDefaultTruncTol = 0x1p-50;

// ---------------------------------------------------------------------------
// c-sequences for the Cornalba-Shiffman construction
// ---------------------------------------------------------------------------

// Strictly increasing positive integers c_1 < c_2 < ...
// "pow:lambda,l" means c_i = floor(exp2 applied l times to lambda*i);
// "explicit:[a,b,...]" is a finite list (the series is truncated at its end).
class CSequence {
public:
    static CSequence pow_rule(double lambda, int iterates) {
        if (lambda <= 0 || iterates < 1) throw config_error("pow rule needs lambda > 0, l >= 1");
        CSequence s;
        s.lambda_ = lambda;
        s.iterates_ = iterates;
        s.validate();
        return s;
    }

    static CSequence explicit_list(std::vector<std::int64_t> list) {
        if (list.empty()) throw config_error("explicit c-sequence is empty");
        CSequence s;
        s.list_ = std::move(list);
        s.validate();
        return s;
    }

    static CSequence from_spec(const std::string& spec) {
        if (spec.rfind("pow:", 0) == 0) {
            std::size_t comma = spec.find(',', 4);
            if (comma == std::string::npos) throw config_error("bad c-sequence spec: " + spec);
            double lambda = std::stod(spec.substr(4, comma - 4));
            int l = std::stoi(spec.substr(comma + 1));
            return pow_rule(lambda, l);
        }
        if (spec.rfind("explicit:", 0) == 0) {
            std::vector<std::int64_t> list;
            std::size_t pos = spec.find('[');
            std::size_t end = spec.rfind(']');
            if (pos == std::string::npos || end == std::string::npos || end <= pos)
                throw config_error("bad c-sequence spec: " + spec);
            std::string body = spec.substr(pos + 1, end - pos - 1);
            std::size_t at = 0;
            while (at < body.size()) {
                std::size_t next = body.find(',', at);
                if (next == std::string::npos) next = body.size();
                list.push_back(std::stoll(body.substr(at, next - at)));
                at = next + 1;
            }
            return explicit_list(std::move(list));
        }
        throw config_error("unknown c-sequence spec: " + spec);
    }

    // c_i as a double; +inf once the rule overflows, quiet NaN past the end of
    // an explicit list.
    double c(std::int64_t i) const {
        if (i < 1) return std::numeric_limits<double>::quiet_NaN();
        if (!list_.empty()) {
            if (static_cast<std::size_t>(i) > list_.size()) return std::numeric_limits<double>::quiet_NaN();
            return static_cast<double>(list_[static_cast<std::size_t>(i - 1)]);
        }
        double x = lambda_ * static_cast<double>(i);
        for (int k = 0; k < iterates_; ++k) {
            if (x > 1030.0) return std::numeric_limits<double>::infinity();
            x = std::exp2(x);
        }
        return std::floor(x);
    }

    std::int64_t c_int(std::int64_t i) const {
        double v = c(i);
        if (!(v >= 1.0) || v > 9.0e15) throw config_error("c_i not representable as an exact integer");
        return static_cast<std::int64_t>(v);
    }

    bool in_range(std::int64_t i) const {
        if (i < 1) return false;
        if (!list_.empty()) return static_cast<std::size_t>(i) <= list_.size();
        return true;
    }

    bool is_pow_rule() const { return list_.empty(); }
    double lambda() const { return lambda_; }
    int iterates() const { return iterates_; }

    std::string spec() const {
        if (!list_.empty()) {
            std::string s = "explicit:[";
            for (std::size_t k = 0; k < list_.size(); ++k) {
                if (k) s += ',';
                s += std::to_string(list_[k]);
            }
            return s + "]";
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "pow:%.17g,%d", lambda_, iterates_);
        return buf;
    }

private:
    void validate() const {
        double prev = 0.0;
        std::int64_t limit = list_.empty() ? 64 : static_cast<std::int64_t>(list_.size());
        for (std::int64_t i = 1; i <= limit; ++i) {
            double ci = c(i);
            if (std::isinf(ci)) break;  // strictly increasing beyond double range by construction
            if (!(ci >= 1.0)) throw config_error("c-sequence must consist of positive integers");
            if (!(ci > prev)) throw config_error("c-sequence must be strictly increasing");
            prev = ci;
            if (ci > 0x1p60) break;
        }
    }

    double lambda_ = 1.0;
    int iterates_ = 1;
    std::vector<std::int64_t> list_;
};

struct CSParams {
    CSequence c = CSequence::pow_rule(1.0, 1);
    double truncation_rel_err = kDefaultTruncTol;
};

// ---------------------------------------------------------------------------
// g(z) = prod_{i>=1} (1 - z/2^i) and relatives
// ---------------------------------------------------------------------------

namespace detail {

// Truncation index guaranteeing relative tail error <= tol:
// | log prod_{i>N} (1 - z 2^-i) | <= 2 |z| 2^-N once |z| 2^-N <= 1/2.
inline std::int64_t g_trunc_index(double log2_abs_z, double tol) {
    if (log2_abs_z == -std::numeric_limits<double>::infinity()) return 1;
    double need = std::max(log2_abs_z + 1.0, log2_abs_z + 2.0 - std::log2(tol));
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(need)) + 1);
}

}  // namespace detail

// skip = 0 evaluates g itself; skip = k evaluates g_k (k-th factor removed).
inline LogComplex cs_g_skip(const LogComplex& z, std::int64_t skip, double tol = kDefaultTruncTol) {
    using namespace xnum;
    if (z.is_zero()) return one();
    std::int64_t N = detail::g_trunc_index(log2_abs(z), tol);
    LogComplex acc = one();
    for (std::int64_t i = 1; i <= N; ++i) {
        if (i == skip) continue;
        LogComplex factor = sub(one(), scale_pow2(z, -i));
        acc = mul(acc, factor);
        if (acc.is_zero()) return acc;  // exact zero factor (z = 2^i)
    }
    return acc;
}

inline LogComplex cs_g(const LogComplex& z, double tol = kDefaultTruncTol) { return cs_g_skip(z, 0, tol); }

// log2 prod_{l>=1} (1 - 2^-l), certified to ~2^-60.
inline double log2_prod_one_minus_pow2() {
    static const double v = [] {
        double s = 0.0;
        for (int l = 1; l <= 120; ++l) s += std::log2(1.0 - std::ldexp(1.0, -l));
        return s;
    }();
    return v;
}

// log2 prod_{i>=1} (1 + 2^-i), certified to ~2^-60.
inline double log2_prod_one_plus_pow2() {
    static const double v = [] {
        double s = 0.0;
        for (int l = 1; l <= 120; ++l) s += std::log2(1.0 + std::ldexp(1.0, -l));
        return s;
    }();
    return v;
}

// |g_i(2^i)| by the closed factorization prod_{j<i}(2^{i-j}-1) * prod_{j>i}(1-2^{i-j});
// the value is positive real. Returned as log2.
inline double cs_g_skip_log2_at_pow2(std::int64_t i) {
    if (i < 1) throw config_error("slice index must be >= 1");
    double s = 0.0;
    for (std::int64_t l = 1; l < i; ++l) {
        double ld = static_cast<double>(l);
        if (l <= 30)
            s += std::log2(std::ldexp(1.0, static_cast<int>(l)) - 1.0);
        else
            s += ld + std::log1p(-std::ldexp(1.0, -static_cast<int>(l))) / std::numbers::ln2;
    }
    return s + log2_prod_one_minus_pow2();
}

// P_c(w) = prod_{j=1..c} (w - 1/j)
inline LogComplex cs_P(const LogComplex& w, std::int64_t c) {
    using namespace xnum;
    LogComplex acc = one();
    for (std::int64_t j = 1; j <= c; ++j) {
        acc = mul(acc, sub(w, from_double(1.0 / static_cast<double>(j))));
        if (acc.is_zero()) return acc;
    }
    return acc;
}

inline LogComplex cs_P_deriv(const LogComplex& w, std::int64_t c) {
    using namespace xnum;
    LogComplex acc = zero();
    for (std::int64_t j = 1; j <= c; ++j) {
        LogComplex term = one();
        for (std::int64_t k = 1; k <= c; ++k) {
            if (k == j) continue;
            term = mul(term, sub(w, from_double(1.0 / static_cast<double>(k))));
            if (term.is_zero()) break;
        }
        acc = add(acc, term);
    }
    return acc;
}

namespace detail {

// Certified upper bound on log2 |g_l(z)| uniform in l:
// |g_l(z)| <= prod_{i>=1} (1 + |z| 2^-i).
inline double log2_g_hat(double log2_abs_z) {
    if (log2_abs_z == -std::numeric_limits<double>::infinity()) return 0.0;
    std::int64_t L = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(log2_abs_z))) + 64;
    double s = 0.0;
    for (std::int64_t i = 1; i <= L; ++i) {
        double t = log2_abs_z - static_cast<double>(i);  // log2 of |z| 2^-i
        if (t > 0)
            s += t + std::log2(1.0 + std::exp2(-t));
        else
            s += std::log2(1.0 + std::exp2(t));
    }
    return s + 1e-9;  // slack covering the truncated tail and rounding, as an upper bound
}

// log2 (|w| + 1) as a certified upper bound.
inline double log2_w_plus_1(double log2_abs_w) {
    if (log2_abs_w == -std::numeric_limits<double>::infinity()) return 0.0;
    if (log2_abs_w <= 52.0) return std::log2(1.0 + std::exp2(log2_abs_w)) + 1e-12;
    return log2_abs_w + 0x1p-50;
}

struct CsTerm {
    std::int64_t l;
    std::int64_t c;
    double log2_bound;
};

// Indices whose analytic term bound 2^{-c_l^2} Ghat (|w|+1)^{c_l} can matter.
// Bounds first rise (while c_{l+1}+c_l < log2(|w|+1)) then fall doubly
// exponentially; everything below peak - margin is irrelevant.
inline std::vector<CsTerm> cs_candidate_terms(const CSequence& cs, double log2_gh, double lw, double margin) {
    std::vector<CsTerm> out;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::int64_t l = 1; l <= 100000; ++l) {
        if (!cs.in_range(l)) break;
        double c = cs.c(l);
        if (std::isinf(c) || std::isnan(c)) break;
        double bound = -c * c + c * lw + log2_gh;
        peak = std::max(peak, bound);
        if (bound >= peak - margin && c <= 0x1p26) {
            out.push_back({l, static_cast<std::int64_t>(c), bound});
        }
        double cnext = cs.in_range(l + 1) ? cs.c(l + 1) : std::numeric_limits<double>::infinity();
        bool past_peak = std::isinf(cnext) || (cnext + c > lw);
        if (past_peak && bound < peak - margin) break;
    }
    return out;
}

}  // namespace detail

namespace detail {

// z = 2^i bit-exactly for an in-range slice index i >= 1.
inline std::optional<std::int64_t> exact_slice_index(const LogComplex& z, const CSequence& c) {
    if (z.im == 0.0 && z.re == 1.0 && z.exp2 >= 1 && c.in_range(z.exp2)) return z.exp2;
    return std::nullopt;
}

}  // namespace detail

// f(z,w) = sum_i 2^{-c_i^2} g_i(z) P_{c_i}(w), truncated by the analytic term
// bounds |g_i(z)| <= prod(1+|z|2^-i), |P_c(w)| <= (|w|+1)^c. Terms are summed
// in descending bound order and the sum stops once the certified tail drops
// below tol relative to the partial sum.
//
// On an exact slice z = 2^i every g_l with l != i carries an exact zero
// factor, so the series is the single term i, computed directly (the generic
// bound bookkeeping would discard it as negligible).
inline LogComplex cs_f(const LogComplex& z, const LogComplex& w, const CSParams& params) {
    using namespace xnum;
    if (auto slice = detail::exact_slice_index(z, params.c)) {
        double cd = params.c.c(*slice);
        if (cd > 0x1p20 || cd * cd > 0x1p62) {
            // the lone term sits below the representable exponent range
            LogComplex r = zero();
            r.absorbed = true;
            return r;
        }
        std::int64_t c = params.c.c_int(*slice);
        LogComplex gl = cs_g_skip(z, *slice, params.truncation_rel_err / 8.0);
        return scale_pow2(mul(gl, cs_P(w, c)), -c * c);
    }
    double tol_log2 = std::log2(params.truncation_rel_err);
    double gh = detail::log2_g_hat(log2_abs(z));
    double lw = detail::log2_w_plus_1(log2_abs(w));
    auto cand = detail::cs_candidate_terms(params.c, gh, lw, 160.0);
    std::sort(cand.begin(), cand.end(), [](const detail::CsTerm& a, const detail::CsTerm& b) {
        if (a.log2_bound != b.log2_bound) return a.log2_bound > b.log2_bound;
        return a.l < b.l;
    });
    LogComplex acc = zero();
    for (std::size_t k = 0; k < cand.size(); ++k) {
        if (!acc.is_zero()) {
            double remaining = std::log2(static_cast<double>(cand.size() - k));
            if (cand[k].log2_bound + remaining <= tol_log2 + log2_abs(acc)) break;
        }
        const auto& t = cand[k];
        LogComplex gl = cs_g_skip(z, t.l, params.truncation_rel_err / 8.0);
        if (gl.is_zero()) continue;
        LogComplex pc = cs_P(w, t.c);
        if (pc.is_zero()) continue;
        LogComplex term = scale_pow2(mul(gl, pc), -t.c * t.c);
        acc = add(acc, term);
    }
    return acc;
}

inline std::pair<LogComplex, LogComplex> cs_F(const LogComplex& z, const LogComplex& w, const CSParams& params) {
    return {cs_g(z, params.truncation_rel_err), cs_f(z, w, params)};
}

// ---------------------------------------------------------------------------
// EntireMap
// ---------------------------------------------------------------------------

namespace detail {

class MapImpl {
public:
    virtual ~MapImpl() = default;
    virtual int dim_in() const = 0;
    virtual int dim_out() const = 0;
    virtual void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const = 0;
    virtual void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const = 0;
    virtual std::optional<double> log2_mu_upper(double) const { return std::nullopt; }
    virtual const char* mu_upper_note() const { return ""; }
    // Zeros inside the closed euclidean ball B_r, if the map knows them.
    virtual std::optional<std::vector<std::vector<std::complex<double>>>> zero_list(double) const {
        return std::nullopt;
    }
    virtual std::string describe() const = 0;
};

}  // namespace detail

class EntireMap {
public:
    explicit EntireMap(std::shared_ptr<const detail::MapImpl> impl) : impl_(std::move(impl)) {}

    int dim_in() const { return impl_->dim_in(); }
    int dim_out() const { return impl_->dim_out(); }

    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const { impl_->eval(z, out); }

    std::vector<LogComplex> eval_vec(std::span<const LogComplex> z) const {
        std::vector<LogComplex> out(static_cast<std::size_t>(dim_out()));
        impl_->eval(z, out);
        return out;
    }

    // 1-variable scalar convenience.
    LogComplex eval1(const LogComplex& z) const {
        LogComplex out;
        impl_->eval(std::span(&z, 1), std::span(&out, 1));
        return out;
    }

    // log2 of the euclidean norm |f(z)|.
    double log2_norm(std::span<const LogComplex> z) const {
        std::vector<LogComplex> out = eval_vec(z);
        double mx = -std::numeric_limits<double>::infinity();
        for (auto& c : out) mx = std::max(mx, xnum::log2_abs(c));
        if (mx == -std::numeric_limits<double>::infinity()) return mx;
        double s = 0.0;
        for (auto& c : out) {
            double d = xnum::log2_abs(c) - mx;
            if (d > -60.0) s += std::exp2(2.0 * d);
        }
        return mx + 0.5 * std::log2(s);
    }

    // Row-major dim_out x dim_in matrix.
    std::vector<LogComplex> jacobian(std::span<const LogComplex> z) const {
        std::vector<LogComplex> J(static_cast<std::size_t>(dim_out() * dim_in()));
        impl_->jacobian(z, J);
        return J;
    }

    std::optional<double> log2_mu_upper(double r) const { return impl_->log2_mu_upper(r); }
    const char* mu_upper_note() const { return impl_->mu_upper_note(); }
    std::optional<std::vector<std::vector<std::complex<double>>>> zero_list(double r) const {
        return impl_->zero_list(r);
    }
    std::string describe() const { return impl_->describe(); }

private:
    std::shared_ptr<const detail::MapImpl> impl_;
};

namespace detail {

class ExpShiftMap final : public MapImpl {
public:
    explicit ExpShiftMap(int n) : n_(n) {
        if (n < 1) throw config_error("exp_shift_n needs n >= 1");
    }
    int dim_in() const override { return n_; }
    int dim_out() const override { return n_; }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        for (int k = 0; k < n_; ++k) out[k] = xnum::add(xnum::cexp(z[k]), xnum::one());
    }
    void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const override {
        for (auto& c : J) c = xnum::zero();
        for (int k = 0; k < n_; ++k) J[static_cast<std::size_t>(k * n_ + k)] = xnum::cexp(z[k]);
    }
    std::optional<double> log2_mu_upper(double r) const override {
        // mu = sqrt((e^r+1)^2 + 4(n-1)), maximized with all modulus on one axis
        double l2 = r * std::numbers::log2e + std::log1p(std::exp(-r)) / std::numbers::ln2;
        if (n_ > 1) l2 += 0.5 * std::log1p(4.0 * (n_ - 1) * std::exp2(-2.0 * l2)) / std::numbers::ln2;
        return l2;
    }
    std::optional<std::vector<std::vector<std::complex<double>>>> zero_list(double r) const override {
        std::vector<std::vector<std::complex<double>>> zs;
        const double pi = std::acos(-1.0);
        if (n_ == 1) {
            for (std::int64_t k = 0;; ++k) {
                double y = (2 * k + 1) * pi;
                if (y > r) break;
                zs.push_back({{0.0, y}});
                zs.push_back({{0.0, -y}});
            }
        } else if (n_ == 2) {
            for (std::int64_t a = 0;; ++a) {
                double ya = (2 * a + 1) * pi;
                if (ya * ya > r * r) break;
                for (std::int64_t b = 0;; ++b) {
                    double yb = (2 * b + 1) * pi;
                    if (ya * ya + yb * yb > r * r) break;
                    for (int sa : {1, -1})
                        for (int sb : {1, -1})
                            zs.push_back({{0.0, sa * ya}, {0.0, sb * yb}});
                }
            }
        } else {
            return std::nullopt;
        }
        return zs;
    }
    std::string describe() const override { return "exp_shift_n(n=" + std::to_string(n_) + ")"; }

private:
    int n_;
};

class PolynomialMap final : public MapImpl {
public:
    explicit PolynomialMap(std::vector<std::complex<double>> coeffs) : coeffs_(std::move(coeffs)) {
        if (coeffs_.empty()) throw config_error("polynomial needs at least one coefficient");
    }
    int dim_in() const override { return 1; }
    int dim_out() const override { return 1; }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        out[0] = horner(coeffs_, z[0]);
    }
    void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const override {
        std::vector<std::complex<double>> d;
        for (std::size_t j = 1; j < coeffs_.size(); ++j) d.push_back(coeffs_[j] * static_cast<double>(j));
        if (d.empty()) d.push_back({0.0, 0.0});
        J[0] = horner(d, z[0]);
    }
    std::optional<double> log2_mu_upper(double r) const override {
        // triangle inequality on the coefficients, in log space
        double mx = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        double lr = std::log2(r);
        for (std::size_t j = 0; j < coeffs_.size(); ++j) {
            double a = std::abs(coeffs_[j]);
            if (a == 0.0) continue;
            double t = std::log2(a) + static_cast<double>(j) * lr;
            terms.push_back(t);
            mx = std::max(mx, t);
        }
        if (terms.empty()) return -std::numeric_limits<double>::infinity();
        double s = 0.0;
        for (double t : terms) s += std::exp2(t - mx);
        return mx + std::log2(s) + 1e-12;
    }
    std::string describe() const override {
        std::string s = "polynomial(coeffs=[";
        for (std::size_t j = 0; j < coeffs_.size(); ++j) {
            if (j) s += ',';
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g%+.17gi", coeffs_[j].real(), coeffs_[j].imag());
            s += buf;
        }
        return s + "])";
    }

    static LogComplex horner(const std::vector<std::complex<double>>& c, const LogComplex& z) {
        using namespace xnum;
        LogComplex acc = from_complex(c.back());
        for (std::size_t j = c.size(); j-- > 1;) acc = add(mul(acc, z), from_complex(c[j - 1]));
        return acc;
    }

private:
    std::vector<std::complex<double>> coeffs_;
};

class CsGMap final : public MapImpl {
public:
    explicit CsGMap(double tol) : tol_(tol) {}
    int dim_in() const override { return 1; }
    int dim_out() const override { return 1; }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        out[0] = cs_g(z[0], tol_);
    }
    void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const override {
        // g'(z) = -sum_l 2^-l g_l(z); tail below 2^-L Ghat
        using namespace xnum;
        double gh = log2_g_hat(log2_abs(z[0]));
        std::int64_t L = g_trunc_index(log2_abs(z[0]), tol_) + 8;
        (void)gh;
        LogComplex acc = zero();
        for (std::int64_t l = 1; l <= L; ++l)
            acc = add(acc, scale_pow2(cs_g_skip(z[0], l, tol_ / 8.0), -l));
        J[0] = neg(acc);
    }
    std::optional<double> log2_mu_upper(double r) const override {
        return log2_g_hat(std::log2(std::max(r, 1e-300)));
    }
    std::optional<std::vector<std::vector<std::complex<double>>>> zero_list(double r) const override {
        std::vector<std::vector<std::complex<double>>> zs;
        for (std::int64_t i = 1; std::ldexp(1.0, static_cast<int>(i)) <= r && i < 1024; ++i)
            zs.push_back({{std::ldexp(1.0, static_cast<int>(i)), 0.0}});
        return zs;
    }
    std::string describe() const override { return "cs_g"; }

private:
    double tol_;
};

class CsFMap final : public MapImpl {
public:
    explicit CsFMap(CSParams params) : params_(std::move(params)) {}
    int dim_in() const override { return 2; }
    int dim_out() const override { return 2; }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        out[0] = cs_g(z[0], params_.truncation_rel_err);
        out[1] = cs_f(z[0], z[1], params_);
    }
    void jacobian(std::span<const LogComplex> zw, std::span<LogComplex> J) const override {
        using namespace xnum;
        const LogComplex& z = zw[0];
        const LogComplex& w = zw[1];
        double tol = params_.truncation_rel_err;
        // row 0: (g'(z), 0)
        std::int64_t L = g_trunc_index(log2_abs(z), tol) + 8;
        LogComplex gp = zero();
        for (std::int64_t l = 1; l <= L; ++l)
            gp = add(gp, scale_pow2(cs_g_skip(z, l, tol / 8.0), -l));
        J[0] = neg(gp);
        J[1] = zero();
        double gh = log2_g_hat(log2_abs(z));
        double lw = log2_w_plus_1(log2_abs(w));
        if (auto slice = exact_slice_index(z, params_.c)) {
            // d_w f: the single surviving term; d_z f: the product rule keeps
            // exactly the factor-i derivative alive in every other term.
            double cd = params_.c.c(*slice);
            if (cd > 0x1p20 || cd * cd > 0x1p62) {
                J[2] = J[3] = zero();
                J[2].absorbed = J[3].absorbed = true;
                return;
            }
            std::int64_t ci = params_.c.c_int(*slice);
            LogComplex gi = cs_g_skip(z, *slice, tol / 8.0);
            J[3] = scale_pow2(mul(gi, cs_P_deriv(w, ci)), -ci * ci);
            auto cand = cs_candidate_terms(params_.c, gh, lw, 220.0);
            bool has_slice = false;
            for (auto& t : cand) has_slice = has_slice || t.l == *slice;
            if (!has_slice) cand.push_back({*slice, ci, 0.0});
            LogComplex dz = zero();
            for (const auto& t : cand) {
                LogComplex pc = cs_P(w, t.c);
                if (pc.is_zero()) continue;
                LogComplex glp;
                if (t.l == *slice) {
                    glp = zero();
                    for (std::int64_t j = 1; j <= L; ++j) {
                        if (j == t.l) continue;
                        glp = add(glp, scale_pow2(g_skip2(z, t.l, j, tol / 8.0), -j));
                    }
                    glp = neg(glp);
                } else {
                    glp = neg(scale_pow2(g_skip2(z, t.l, *slice, tol / 8.0), -*slice));
                }
                dz = add(dz, scale_pow2(mul(glp, pc), -t.c * t.c));
            }
            J[2] = dz;
            return;
        }
        // row 1: (d_z f, d_w f) over the candidate terms (enlarged margin
        // covers the extra factor c_l in the derivative bounds)
        auto cand = cs_candidate_terms(params_.c, gh, lw, 220.0);
        LogComplex dz = zero(), dw = zero();
        for (const auto& t : cand) {
            LogComplex pc = cs_P(w, t.c);
            if (!pc.is_zero()) {
                // g_l'(z) = -sum_{j != l} 2^-j g_{l,j}(z)
                LogComplex glp = zero();
                for (std::int64_t j = 1; j <= L; ++j) {
                    if (j == t.l) continue;
                    glp = add(glp, scale_pow2(g_skip2(z, t.l, j, tol / 8.0), -j));
                }
                dz = add(dz, scale_pow2(mul(neg(glp), pc), -t.c * t.c));
            }
            LogComplex gl = cs_g_skip(z, t.l, tol / 8.0);
            if (!gl.is_zero()) {
                LogComplex pd = cs_P_deriv(w, t.c);
                if (!pd.is_zero()) dw = add(dw, scale_pow2(mul(gl, pd), -t.c * t.c));
            }
        }
        J[2] = dz;
        J[3] = dw;
    }
    std::optional<double> log2_mu_upper(double r) const override {
        if (r < 2.0) return std::nullopt;
        double lr = std::log2(r);
        return 1.5 * lr * lr + 3.5 * lr + 4.0 + log2_prod_one_plus_pow2();
    }
    const char* mu_upper_note() const override { return "analytic, possibly loose"; }
    std::optional<std::vector<std::vector<std::complex<double>>>> zero_list(double r) const override {
        std::vector<std::vector<std::complex<double>>> zs;
        for (std::int64_t i = 1; i <= 60; ++i) {
            if (!params_.c.in_range(i)) break;
            double x = std::ldexp(1.0, static_cast<int>(i));
            if (x * x > r * r) break;
            std::int64_t ci = params_.c.c_int(i);
            for (std::int64_t j = 1; j <= ci; ++j) {
                double w = 1.0 / static_cast<double>(j);
                if (x * x + w * w <= r * r) zs.push_back({{x, 0.0}, {w, 0.0}});
                if (zs.size() > 2000000) throw config_error("cs_F zero list too large at this radius");
            }
        }
        return zs;
    }
    std::string describe() const override { return "cs_F(c=" + params_.c.spec() + ")"; }

    const CSParams& params() const { return params_; }

    // product with factors l and j removed
    static LogComplex g_skip2(const LogComplex& z, std::int64_t skip1, std::int64_t skip2, double tol) {
        using namespace xnum;
        if (z.is_zero()) return one();
        std::int64_t N = g_trunc_index(log2_abs(z), tol);
        LogComplex acc = one();
        for (std::int64_t i = 1; i <= N; ++i) {
            if (i == skip1 || i == skip2) continue;
            acc = mul(acc, sub(one(), scale_pow2(z, -i)));
            if (acc.is_zero()) return acc;
        }
        return acc;
    }

private:
    CSParams params_;
};

// P_c in product form (no coefficient expansion), for the per-slice reductions.
class CsPMap final : public MapImpl {
public:
    explicit CsPMap(std::int64_t c) : c_(c) {
        if (c < 1) throw config_error("cs_P_map needs c >= 1");
    }
    int dim_in() const override { return 1; }
    int dim_out() const override { return 1; }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        out[0] = cs_P(z[0], c_);
    }
    void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const override {
        J[0] = cs_P_deriv(z[0], c_);
    }
    std::optional<std::vector<std::vector<std::complex<double>>>> zero_list(double r) const override {
        std::vector<std::vector<std::complex<double>>> zs;
        for (std::int64_t j = 1; j <= c_; ++j) {
            double w = 1.0 / static_cast<double>(j);
            if (w <= r) zs.push_back({{w, 0.0}});
        }
        return zs;
    }
    std::string describe() const override { return "cs_P(c=" + std::to_string(c_) + ")"; }

private:
    std::int64_t c_;
};

class ExprMap final : public MapImpl {
public:
    ExprMap(std::vector<expr::ExprAst> components, int n, std::vector<std::string> sources)
        : comps_(std::move(components)), n_(n), sources_(std::move(sources)) {}
    int dim_in() const override { return n_; }
    int dim_out() const override { return static_cast<int>(comps_.size()); }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        for (std::size_t k = 0; k < comps_.size(); ++k) out[k] = expr::eval(comps_[k], z);
    }
    void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const override {
        auto m = expr::jacobian(comps_, z);
        std::copy(m.begin(), m.end(), J.begin());
    }
    std::string describe() const override {
        std::string s = "expr(";
        for (std::size_t k = 0; k < sources_.size(); ++k) {
            if (k) s += "; ";
            s += sources_[k];
        }
        return s + ")";
    }

private:
    std::vector<expr::ExprAst> comps_;
    int n_;
    std::vector<std::string> sources_;
};

class ShiftedMap final : public MapImpl {
public:
    ShiftedMap(EntireMap base, std::vector<std::complex<double>> shift)
        : base_(std::move(base)), shift_(std::move(shift)) {
        if (static_cast<int>(shift_.size()) != base_.dim_out())
            throw config_error("shift dimension mismatch");
    }
    int dim_in() const override { return base_.dim_in(); }
    int dim_out() const override { return base_.dim_out(); }
    void eval(std::span<const LogComplex> z, std::span<LogComplex> out) const override {
        base_.eval(z, out);
        for (std::size_t k = 0; k < shift_.size(); ++k)
            out[k] = xnum::add(out[k], xnum::from_complex(shift_[k]));
    }
    void jacobian(std::span<const LogComplex> z, std::span<LogComplex> J) const override {
        auto m = base_.jacobian(z);
        std::copy(m.begin(), m.end(), J.begin());
    }
    std::optional<double> log2_mu_upper(double r) const override {
        auto b = base_.log2_mu_upper(r);
        if (!b) return std::nullopt;
        double sd = 0.0;
        for (auto& c : shift_) sd += std::norm(c);
        sd = std::sqrt(sd);
        if (sd == 0.0) return b;
        double mx = std::max(*b, std::log2(sd));
        return mx + std::log2(std::exp2(*b - mx) + std::exp2(std::log2(sd) - mx)) + 1e-12;
    }
    std::string describe() const override {
        char buf[96];
        std::snprintf(buf, sizeof buf, "shifted(%+.6g%+.6gi,...)", shift_[0].real(), shift_[0].imag());
        return base_.describe() + buf;
    }

private:
    EntireMap base_;
    std::vector<std::complex<double>> shift_;
};

}  // namespace detail

inline EntireMap exp_shift_map(int n) {
    return EntireMap(std::make_shared<detail::ExpShiftMap>(n));
}

inline EntireMap polynomial_map(std::vector<std::complex<double>> coeffs) {
    return EntireMap(std::make_shared<detail::PolynomialMap>(std::move(coeffs)));
}

inline EntireMap cs_g_map(double tol = kDefaultTruncTol) {
    return EntireMap(std::make_shared<detail::CsGMap>(tol));
}

inline EntireMap cs_F_map(CSParams params = {}) {
    return EntireMap(std::make_shared<detail::CsFMap>(std::move(params)));
}

inline EntireMap cs_P_map(std::int64_t c) {
    return EntireMap(std::make_shared<detail::CsPMap>(c));
}

inline EntireMap expression_map(const std::vector<std::string>& components, int n) {
    std::vector<expr::ExprAst> asts;
    for (auto& s : components) asts.push_back(expr::parse(s, n));
    return EntireMap(std::make_shared<detail::ExprMap>(std::move(asts), n, components));
}

inline EntireMap shifted_map(EntireMap base, std::vector<std::complex<double>> shift) {
    return EntireMap(std::make_shared<detail::ShiftedMap>(std::move(base), std::move(shift)));
}

struct BuiltinParams {
    int n = 1;
    std::vector<std::complex<double>> coeffs;
    CSParams cs;
};

inline EntireMap builtin(const std::string& name, const BuiltinParams& p = {}) {
    if (name == "exp_shift_n") return exp_shift_map(p.n);
    if (name == "polynomial") return polynomial_map(p.coeffs.empty() ? std::vector<std::complex<double>>{{1.0, 0.0}} : p.coeffs);
    if (name == "cs_g") return cs_g_map(p.cs.truncation_rel_err);
    if (name == "cs_F") return cs_F_map(p.cs);
    throw config_error("unknown builtin map: " + name);
}

// ---------------------------------------------------------------------------
// Maximum modulus estimation
// ---------------------------------------------------------------------------

struct MaxModulusReport {
    double r = 0.0;
    double log2_mu_lower = -std::numeric_limits<double>::infinity();
    std::optional<double> log2_mu_upper;
    std::string upper_note;
    std::int64_t sample_count = 0;
};

namespace detail {

// Deterministic B_r sample #s for an n-dim map; sequences are prefix-nested
// so enlarging the budget only adds samples.
inline std::vector<LogComplex> ball_sample(int n, double r, std::int64_t s) {
    auto frac = [](double x) { return x - std::floor(x); };
    const double pi = std::acos(-1.0);
    std::vector<LogComplex> pt(static_cast<std::size_t>(n), xnum::zero());
    std::int64_t axis = 4 * n;
    if (s < axis) {
        int coord = static_cast<int>(s / 4);
        int which = static_cast<int>(s % 4);
        double re = (which == 0) ? r : (which == 1) ? -r : 0.0;
        double im = (which == 2) ? r : (which == 3) ? -r : 0.0;
        pt[static_cast<std::size_t>(coord)] = xnum::from_complex(re, im);
        return pt;
    }
    std::int64_t t = s - axis;
    bool boundary = (t % 10) < 7;
    std::int64_t idx = boundary ? (t / 10) * 7 + (t % 10) : (t / 10) * 3 + (t % 10 - 7);
    double rho = r;
    if (!boundary) {
        // interior shells accumulating toward the boundary
        rho = r * std::sqrt(frac(static_cast<double>(idx) * 0.7548776662466927 + 0.31));
    }
    if (n == 1) {
        double th = 2.0 * pi * frac(static_cast<double>(idx) * 0.6180339887498949);
        pt[0] = xnum::from_complex(rho * std::cos(th), rho * std::sin(th));
        return pt;
    }
    // n == 2: Hopf coordinates on S^3
    double u = frac(static_cast<double>(idx) * 0.4142135623730951 + 0.17);
    double alpha = std::asin(std::sqrt(u));  // cos^2/sin^2 split uniform
    double th = 2.0 * pi * frac(static_cast<double>(idx) * 0.7320508075688772 + 0.05);
    double ph = 2.0 * pi * frac(static_cast<double>(idx) * 0.2360679774997896 + 0.41);
    pt[0] = xnum::from_complex(rho * std::cos(alpha) * std::cos(th), rho * std::cos(alpha) * std::sin(th));
    pt[1] = xnum::from_complex(rho * std::sin(alpha) * std::cos(ph), rho * std::sin(alpha) * std::sin(ph));
    return pt;
}

}  // namespace detail

inline MaxModulusReport mu_estimate(const EntireMap& map, double r, std::int64_t budget) {
    if (!(r > 0.0) || budget < 1) throw config_error("mu_estimate needs r > 0 and budget >= 1");
    int n = map.dim_in();
    if (n > 2) throw config_error("mu_estimate supports n <= 2");
    double lower = par::reduce_ranges<double>(
        budget, 512, -std::numeric_limits<double>::infinity(),
        [&](std::int64_t lo, std::int64_t hi) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t s = lo; s < hi; ++s) {
                auto pt = detail::ball_sample(n, r, s);
                mx = std::max(mx, map.log2_norm(pt));
            }
            return mx;
        },
        [](double a, double b) { return std::max(a, b); });
    MaxModulusReport rep;
    rep.r = r;
    rep.log2_mu_lower = lower;
    rep.log2_mu_upper = map.log2_mu_upper(r);
    rep.upper_note = map.mu_upper_note();
    rep.sample_count = budget;
    if (rep.log2_mu_upper && lower > *rep.log2_mu_upper + 1e-9 * std::max(1.0, std::fabs(*rep.log2_mu_upper)))
        throw std::logic_error("mu_estimate: sampled lower bound exceeds analytic upper bound");
    return rep;
}

// Prop 4.1 envelope for log2 mu(F, r):
// [ (log r)^2/2 - (3/2) log r + 1,  (3/2)(log r)^2 + (7/2) log r + C ],
// C = 4 + log2 prod (1 + 2^-i).
inline std::pair<double, double> mu_cs_bounds(double r) {
    if (!(r >= 2.0)) throw config_error("mu_cs_bounds needs r >= 2");
    double L = std::log2(r);
    double lo = 0.5 * L * L - 1.5 * L + 1.0;
    double hi = 1.5 * L * L + 3.5 * L + 4.0 + log2_prod_one_plus_pow2();
    return {lo, hi};
}

}  // namespace cobez::maps
