#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cobez/maps.hpp"
#include "cobez/parallel.hpp"

namespace cobez::taylor {

using maps::EntireMap;

class domain_error : public std::runtime_error {
public:
    explicit domain_error(const std::string& msg) : std::runtime_error(msg) {}
};

// log2 of the Cauchy remainder bound C_a a^-k mu(f, ar), C_a = a/(a-1),
// for the Taylor polynomial of degree < k.
inline double remainder_bound(double a, std::int64_t k, double log2_mu_ar) {
    if (!(a > 1.0)) throw domain_error("remainder_bound needs a > 1");
    if (k < 0) throw domain_error("remainder_bound needs k >= 0");
    return std::log2(a / (a - 1.0)) - static_cast<double>(k) * std::log2(a) + log2_mu_ar;
}

// Minimal k >= 1 with C_a a^-k mu(f, ar) < delta/2.
inline std::int64_t choose_degree(double a, double log2_mu_ar, double delta) {
    if (!(a > 1.0)) throw domain_error("choose_degree needs a > 1");
    if (!(delta > 0.0)) throw domain_error("choose_degree needs delta > 0");
    double target = std::log2(delta) - 1.0;
    double guess = (std::log2(a / (a - 1.0)) + log2_mu_ar - target) / std::log2(a);
    std::int64_t k = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(guess)) - 2);
    while (remainder_bound(a, k, log2_mu_ar) >= target) {
        ++k;
        if (k > (std::int64_t(1) << 40)) throw domain_error("choose_degree: k out of range");
    }
    while (k > 1 && remainder_bound(a, k - 1, log2_mu_ar) < target) --k;
    return k;
}

// k^n + 5k(10k)^{2n-2}: zeros of the proper degree-k approximant plus the
// boundary critical-component count.
inline double bezout_bound_for_degree(int n, std::int64_t k) {
    if (n < 1 || k < 1) throw domain_error("bezout_bound needs n >= 1, k >= 1");
    double kd = static_cast<double>(k);
    return std::pow(kd, n) + 5.0 * kd * std::pow(10.0 * kd, 2 * n - 2);
}

inline double tau_bound_for_degree(int n, std::int64_t k) {
    if (n < 1 || k < 1) throw domain_error("tau_bound needs n >= 1, k >= 1");
    return std::pow(static_cast<double>(k), n);
}

// 3k(3+2k)^{2n-1}, i.e. (1/2)(4k+2k)(3+2k)^{2n-1}.
inline double zeta_d_bound_for_degree(int n, std::int64_t k) {
    if (n < 1 || k < 1) throw domain_error("zeta_d_bound needs n >= 1, k >= 1");
    double kd = static_cast<double>(k);
    return 3.0 * kd * std::pow(3.0 + 2.0 * kd, 2 * n - 1);
}

namespace detail {

inline void check_delta_range(double log2_mu_ar, double delta) {
    // Theorem hypothesis: delta in (0, mu(f, ar)/2)
    if (!(delta > 0.0) || !(std::log2(delta) < log2_mu_ar - 1.0))
        throw domain_error("delta outside (0, mu(f,ar)/2)");
}

}  // namespace detail

inline double bezout_bound(int n, double a, double log2_mu_ar, double delta) {
    detail::check_delta_range(log2_mu_ar, delta);
    return bezout_bound_for_degree(n, choose_degree(a, log2_mu_ar, delta));
}

inline double tau_bound(int n, double a, double log2_mu_ar, double delta) {
    detail::check_delta_range(log2_mu_ar, delta);
    return tau_bound_for_degree(n, choose_degree(a, log2_mu_ar, delta));
}

inline double zeta_d_bound(int n, double a, double log2_mu_ar, double delta) {
    detail::check_delta_range(log2_mu_ar, delta);
    return zeta_d_bound_for_degree(n, choose_degree(a, log2_mu_ar, delta));
}

// Taylor coefficients c_0..c_{k-1} of a 1-variable analytic map by trapezoid
// quadrature of the Cauchy integrals on |w| = rho. Spectrally accurate; the
// sample count doubles until the coefficients settle below 1e-12.
inline std::vector<std::complex<double>> taylor_coeffs(const EntireMap& f, std::int64_t k, double rho,
                                                       std::int64_t min_samples = 64) {
    if (f.dim_in() != 1 || f.dim_out() != 1) throw domain_error("taylor_coeffs needs a 1-variable map");
    if (k < 1 || !(rho > 0.0)) throw domain_error("taylor_coeffs needs k >= 1, rho > 0");
    const double two_pi = 2.0 * std::acos(-1.0);
    std::int64_t M = std::max<std::int64_t>({4 * k, 64, min_samples});
    std::vector<std::complex<double>> prev;
    for (; M <= (std::int64_t(1) << 17); M *= 2) {
        // per-block partial sums combined in block order (deterministic)
        std::vector<std::complex<double>> sums(static_cast<std::size_t>(k), {0.0, 0.0});
        const std::int64_t block = 1024;
        const std::int64_t n_blocks = (M + block - 1) / block;
        std::vector<std::vector<std::complex<double>>> partial(static_cast<std::size_t>(n_blocks));
        par::for_blocks(n_blocks, [&](std::int64_t b) {
            std::vector<std::complex<double>> local(static_cast<std::size_t>(k), {0.0, 0.0});
            std::int64_t lo = b * block, hi = std::min(M, lo + block);
            for (std::int64_t m = lo; m < hi; ++m) {
                double th = two_pi * static_cast<double>(m) / static_cast<double>(M);
                std::complex<double> w = std::polar(rho, th);
                std::complex<double> fv =
                    xnum::to_complex(f.eval1(xnum::from_complex(w.real(), w.imag())));
                std::complex<double> rot = std::polar(1.0, -th);  // e^{-i theta}
                std::complex<double> phase{1.0, 0.0};
                for (std::int64_t j = 0; j < k; ++j) {
                    local[static_cast<std::size_t>(j)] += fv * phase;
                    phase *= rot;
                }
            }
            partial[static_cast<std::size_t>(b)] = std::move(local);
        });
        for (auto& p : partial)
            for (std::int64_t j = 0; j < k; ++j) sums[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)];
        std::vector<std::complex<double>> coeffs(static_cast<std::size_t>(k));
        double rho_pow = 1.0;
        for (std::int64_t j = 0; j < k; ++j) {
            coeffs[static_cast<std::size_t>(j)] = sums[static_cast<std::size_t>(j)] / (static_cast<double>(M) * rho_pow);
            rho_pow *= rho;
        }
        if (!prev.empty()) {
            double drift = 0.0;
            for (std::int64_t j = 0; j < k; ++j) {
                double scale = std::max(1.0, std::abs(coeffs[static_cast<std::size_t>(j)]));
                drift = std::max(drift, std::abs(coeffs[static_cast<std::size_t>(j)] - prev[static_cast<std::size_t>(j)]) / scale);
            }
            if (drift < 1e-12) return coeffs;
        }
        prev = std::move(coeffs);
    }
    return prev;
}

// A degree-<k Taylor approximant with its certified Cauchy remainder bound.
struct TaylorModel {
    std::int64_t degree_bound = 0;  // k; coefficients are c_0..c_{k-1}
    std::vector<std::complex<double>> coeffs;
    double a = 2.0;
    double log2_remainder_bound = 0.0;  // valid on B_r when log2_mu_ar bounds mu(f, ar)

    std::complex<double> eval(std::complex<double> z) const {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t j = coeffs.size(); j-- > 0;) acc = acc * z + coeffs[j];
        return acc;
    }
};

inline TaylorModel taylor_model(const EntireMap& f, double a, double log2_mu_ar, double delta,
                                double rho) {
    TaylorModel m;
    m.a = a;
    m.degree_bound = choose_degree(a, log2_mu_ar, delta);
    m.coeffs = taylor_coeffs(f, m.degree_bound, rho);
    m.log2_remainder_bound = remainder_bound(a, m.degree_bound, log2_mu_ar);
    return m;
}

}  // namespace cobez::taylor
