#ifndef RERAND_CHI_SQUARED_HPP
#define RERAND_CHI_SQUARED_HPP

#include <cmath>
#include <limits>

#include "rerand/errors.hpp"

namespace rerand {

namespace detail {

inline constexpr int kGammaMaxIter = 500;
inline constexpr double kGammaEps = 1e-15;

/// Regularized lower incomplete gamma P(s,x) by its power series.
/// Converges quickly for x < s + 1.
inline double gamma_p_series(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    double a = s;
    for (int i = 0; i < kGammaMaxIter; ++i) {
        a += 1.0;
        term *= x / a;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kGammaEps) {
            return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
        }
    }
    throw NumericalError("incomplete gamma series did not converge");
}

/// Regularized upper incomplete gamma Q(s,x) by modified Lentz continued
/// fraction. Converges quickly for x >= s + 1.
inline double gamma_q_contfrac(double s, double x) {
    constexpr double kFpMin = std::numeric_limits<double>::min() / kGammaEps;
    double b = x + 1.0 - s;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kGammaMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kGammaEps) {
            return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
        }
    }
    throw NumericalError("incomplete gamma continued fraction did not converge");
}

/// Inverse standard normal CDF (Acklam's rational approximation). Only used
/// to seed the quantile search; final accuracy comes from bisection.
inline double inverse_normal_cdf(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace detail

/// Regularized lower incomplete gamma P(s,x): series branch for x < s+1,
/// continued fraction otherwise.
inline double gamma_p(double s, double x) {
    if (s <= 0.0) throw InputError("gamma_p requires s > 0");
    if (x < 0.0) throw InputError("gamma_p requires x >= 0");
    if (x == 0.0) return 0.0;
    if (x < s + 1.0) return detail::gamma_p_series(s, x);
    return 1.0 - detail::gamma_q_contfrac(s, x);
}

/// Chi-squared CDF with d degrees of freedom.
inline double chi2_cdf(double x, int d) {
    if (d < 1) throw InputError("chi2_cdf requires d >= 1");
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * d, 0.5 * x);
}

/// Chi-squared p-quantile: the a with chi2_cdf(a, d) = p, |CDF - p| <= 1e-9.
/// Bisection seeded with the Wilson-Hilferty approximation, 200 iteration cap.
inline double chi2_quantile(double p, int d) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("chi2_quantile requires 0 < p < 1");
    if (d < 1) throw InputError("chi2_quantile requires d >= 1");

    constexpr double kTol = 1e-9;
    constexpr int kMaxIter = 200;

    const double z = detail::inverse_normal_cdf(p);
    const double wh = 1.0 - 2.0 / (9.0 * d) + z * std::sqrt(2.0 / (9.0 * d));
    double guess = d * wh * wh * wh;
    if (!(guess > 0.0) || !std::isfinite(guess)) guess = static_cast<double>(d);

    double lo = 0.0;
    double hi = std::max(2.0 * guess, 1e-8);
    int expansions = 0;
    while (chi2_cdf(hi, d) < p) {
        hi *= 2.0;
        if (++expansions > 600) {
            throw NumericalError("chi2_quantile bracket expansion failed");
        }
    }

    for (int i = 0; i < kMaxIter; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double c = chi2_cdf(mid, d);
        if (std::abs(c - p) <= kTol) return mid;
        if (c < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    throw NumericalError("chi2_quantile bisection did not converge");
}

}  // namespace rerand

#endif  // RERAND_CHI_SQUARED_HPP
