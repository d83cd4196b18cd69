#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace cobez::xnum {

class overflow_error : public std::overflow_error {
public:
    explicit overflow_error(const char* what) : std::overflow_error(what) {}
};

// Complex number as (mantissa_re + i*mantissa_im) * 2^exp2 with the mantissa
// modulus kept in [1, 2), or the canonical zero (0, 0, exp2 = 0).
//
// The `absorbed` bit is sticky: it is set when an addition drops an operand
// whose exponent is more than kAbsorbGap bits below the other, and it
// propagates through every subsequent operation. Consumers that need
// truncation-free results check that the bit never got set.
struct LogComplex {
    double re = 0.0;
    double im = 0.0;
    std::int64_t exp2 = 0;
    bool absorbed = false;

    constexpr bool is_zero() const { return re == 0.0 && im == 0.0; }
};

inline constexpr std::int64_t kExpLimit = std::int64_t(1) << 62;
inline constexpr std::int64_t kAbsorbGap = 100;

namespace detail {

inline void check_exp(std::int64_t e) {
    if (e > kExpLimit || e < -kExpLimit) throw overflow_error("LogComplex exponent overflow");
}

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw overflow_error("LogComplex exponent overflow");
    check_exp(r);
    return r;
}

}  // namespace detail

// Builds a normalized value from an arbitrary finite mantissa and exponent.
inline LogComplex normalize(double re, double im, std::int64_t exp2, bool absorbed = false) {
    if (re == 0.0 && im == 0.0) return LogComplex{0.0, 0.0, 0, absorbed};
    int e = std::ilogb(std::fmax(std::fabs(re), std::fabs(im)));
    re = std::ldexp(re, -e);
    im = std::ldexp(im, -e);
    exp2 = detail::checked_add(exp2, e);
    // max component now in [1, 2), so |m|^2 in [1, 8); at most one halving.
    double mag2 = re * re + im * im;
    if (mag2 >= 4.0) {
        re *= 0.5;
        im *= 0.5;
        exp2 = detail::checked_add(exp2, 1);
    } else if (mag2 < 1.0) {  // rounding at the boundary
        re *= 2.0;
        im *= 2.0;
        exp2 = detail::checked_add(exp2, -1);
    }
    return LogComplex{re, im, exp2, absorbed};
}

inline LogComplex from_complex(double re, double im) { return normalize(re, im, 0); }
inline LogComplex from_double(double x) { return normalize(x, 0.0, 0); }
inline LogComplex from_complex(std::complex<double> z) { return normalize(z.real(), z.imag(), 0); }

inline LogComplex zero() { return LogComplex{}; }
inline LogComplex one() { return LogComplex{1.0, 0.0, 0, false}; }

// value = x * 2^k, exact.
inline LogComplex scale_pow2(const LogComplex& x, std::int64_t k) {
    if (x.is_zero()) return x;
    LogComplex r = x;
    r.exp2 = detail::checked_add(r.exp2, k);
    return r;
}

inline LogComplex neg(const LogComplex& x) { return LogComplex{-x.re, -x.im, x.exp2, x.absorbed}; }
inline LogComplex conj(const LogComplex& x) { return LogComplex{x.re, -x.im, x.exp2, x.absorbed}; }

inline LogComplex mul(const LogComplex& a, const LogComplex& b) {
    bool fl = a.absorbed || b.absorbed;
    if (a.is_zero() || b.is_zero()) return LogComplex{0.0, 0.0, 0, fl};
    double re = a.re * b.re - a.im * b.im;
    double im = a.re * b.im + a.im * b.re;
    std::int64_t e = detail::checked_add(a.exp2, b.exp2);
    return normalize(re, im, e, fl);
}

inline LogComplex add(const LogComplex& a, const LogComplex& b) {
    bool fl = a.absorbed || b.absorbed;
    if (a.is_zero()) {
        LogComplex r = b;
        r.absorbed = r.absorbed || fl;
        return r;
    }
    if (b.is_zero()) {
        LogComplex r = a;
        r.absorbed = r.absorbed || fl;
        return r;
    }
    const LogComplex& big = (a.exp2 >= b.exp2) ? a : b;
    const LogComplex& small = (a.exp2 >= b.exp2) ? b : a;
    std::uint64_t gap = static_cast<std::uint64_t>(big.exp2 - small.exp2);
    if (gap > static_cast<std::uint64_t>(kAbsorbGap)) {
        LogComplex r = big;
        r.absorbed = true;  // dropped term; sticky
        return r;
    }
    int g = static_cast<int>(gap);
    double re = big.re + std::ldexp(small.re, -g);
    double im = big.im + std::ldexp(small.im, -g);
    return normalize(re, im, big.exp2, fl);
}

inline LogComplex sub(const LogComplex& a, const LogComplex& b) { return add(a, neg(b)); }

inline LogComplex operator*(const LogComplex& a, const LogComplex& b) { return mul(a, b); }
inline LogComplex operator+(const LogComplex& a, const LogComplex& b) { return add(a, b); }
inline LogComplex operator-(const LogComplex& a, const LogComplex& b) { return sub(a, b); }
inline LogComplex operator-(const LogComplex& a) { return neg(a); }

// log2 |x|; canonical zero maps to -infinity. Exact to double precision for
// |exp2| < 2^52.
inline double log2_abs(const LogComplex& x) {
    if (x.is_zero()) return -std::numeric_limits<double>::infinity();
    return static_cast<double>(x.exp2) + std::log2(std::hypot(x.re, x.im));
}

inline double arg(const LogComplex& x) { return std::atan2(x.im, x.re); }

// Saturates: overflowing exponents map to +/-inf components, underflowing to 0.
inline std::complex<double> to_complex(const LogComplex& x) {
    if (x.is_zero()) return {0.0, 0.0};
    std::int64_t e = x.exp2;
    if (e > 3000) e = 3000;
    if (e < -3000) e = -3000;
    return {std::ldexp(x.re, static_cast<int>(e)), std::ldexp(x.im, static_cast<int>(e))};
}

inline bool same_bits(const LogComplex& a, const LogComplex& b) {
    return a.re == b.re && a.im == b.im && a.exp2 == b.exp2 && a.absorbed == b.absorbed;
}

inline LogComplex pow_int(LogComplex base, std::uint64_t n) {
    LogComplex acc = one();
    acc.absorbed = base.absorbed;
    while (n > 0) {
        if (n & 1) acc = mul(acc, base);
        n >>= 1;
        if (n) base = mul(base, base);
    }
    return acc;
}

namespace detail {

// Cody-Waite split of ln 2; hi has 32 trailing zero bits so k*kLn2Hi is exact
// for |k| < 2^31.
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kLog2E = 1.44269504088896340736;

struct SplitExp {
    double mant;       // in [1, 2)
    std::int64_t e2;   // integer exponent
};

// e^x = mant * 2^e2 for a real x given as m * 2^p, |x| < 2^62.
inline SplitExp real_exp(double m, std::int64_t p) {
    if (m == 0.0) return {1.0, 0};
    if (p > 62) throw overflow_error("exp argument exponent overflow");
    double x = std::ldexp(m, static_cast<int>(std::max<std::int64_t>(p, -1100)));
    if (std::fabs(x) <= 2147000000.0) {
        double kd = std::nearbyint(x * kLog2E);
        double rem = (x - kd * kLn2Hi) - kd * kLn2Lo;
        double mant = std::exp(rem);  // in [~0.7, ~1.5]
        int adj = 0;
        if (mant >= 2.0) { mant *= 0.5; adj = 1; }
        if (mant < 1.0) { mant *= 2.0; adj = -1; }
        return {mant, static_cast<std::int64_t>(kd) + adj};
    }
    // Large arguments: long double bookkeeping, relative error grows ~|x|*2^-63.
    long double t = static_cast<long double>(x) * 1.442695040888963407359924681001892137L;
    long double kf = std::floor(t);
    if (kf >= 9.2e18L || kf <= -9.2e18L) throw overflow_error("exp result exponent overflow");
    double mant = static_cast<double>(std::exp2(static_cast<long double>(t - kf)));
    int adj = 0;
    if (mant >= 2.0) { mant *= 0.5; adj = 1; }
    return {mant, static_cast<std::int64_t>(kf) + adj};
}

}  // namespace detail

// e^z without intermediate overflow: the exponent goes straight into exp2.
// Requires |exp2| of the argument <= 900 (beyond that the phase Im z is not
// representable to any precision in a double).
inline LogComplex cexp(const LogComplex& z) {
    if (z.is_zero()) {
        LogComplex r = one();
        r.absorbed = z.absorbed;
        return r;
    }
    if (z.exp2 > 900) throw overflow_error("cexp: argument too large to carry a phase");
    auto se = detail::real_exp(z.re, z.exp2);
    double y = std::ldexp(z.im, static_cast<int>(std::max<std::int64_t>(z.exp2, -1100)));
    double c = std::cos(y), s = std::sin(y);
    LogComplex r = normalize(se.mant * c, se.mant * s, se.e2, z.absorbed);
    return r;
}

inline LogComplex csin(const LogComplex& z) {
    if (z.is_zero()) return z;
    if (z.exp2 <= 8) {  // |z| < 512: sinh/cosh stay inside double range
        std::complex<double> w = std::sin(to_complex(z));
        LogComplex r = from_complex(w);
        r.absorbed = z.absorbed;
        return r;
    }
    LogComplex iz = LogComplex{-z.im, z.re, z.exp2, z.absorbed};
    LogComplex a = cexp(iz), b = cexp(neg(iz));
    LogComplex d = sub(a, b);  // 2i sin z
    return normalize(d.im * 0.5, -d.re * 0.5, d.exp2, d.absorbed);
}

inline LogComplex ccos(const LogComplex& z) {
    if (z.is_zero()) {
        LogComplex r = one();
        r.absorbed = z.absorbed;
        return r;
    }
    if (z.exp2 <= 8) {
        std::complex<double> w = std::cos(to_complex(z));
        LogComplex r = from_complex(w);
        r.absorbed = z.absorbed;
        return r;
    }
    LogComplex iz = LogComplex{-z.im, z.re, z.exp2, z.absorbed};
    LogComplex s = add(cexp(iz), cexp(neg(iz)));
    return scale_pow2(s, -1);
}

}  // namespace cobez::xnum
