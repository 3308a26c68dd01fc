#ifndef RERAND_INFERENCE_HPP
#define RERAND_INFERENCE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "rerand/balance.hpp"
#include "rerand/errors.hpp"
#include "rerand/rng.hpp"
#include "rerand/samplers.hpp"

namespace rerand {

/// Observed (or imputed) outcomes, one per unit.
using OutcomeVector = Eigen::VectorXd;

/// Randomization-test outcome for a single null value tau_null.
struct FrtResult {
    double p_value = 1.0;
    double observed_stat = 0.0;
    long n_reference = 0;
    double tau_null = 0.0;
};

/// Interval from test inversion over a tau grid. truncated flags intervals
/// whose accepted region touched a grid boundary and may extend past it.
struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    double alpha = 0.0;
    double grid_lo = 0.0;
    double grid_hi = 0.0;
    double grid_step = 0.0;
    bool truncated = false;
};

/// Evenly spaced candidate null values for test inversion.
struct TauGrid {
    double lo = 0.0;
    double hi = 0.0;
    double step = 0.0;
};

inline double diff_in_means(const OutcomeVector& y, const Assignment& z, int n1,
                            int n0) {
    if (y.size() != z.size()) throw InputError("outcome/assignment length mismatch");
    if (z.treated() != n1 || n1 + n0 != z.size()) {
        throw InputError("assignment group sizes do not match n1/n0");
    }
    const Eigen::VectorXd zd = z.as_doubles();
    return y.dot(zd) / n1 - (y.sum() - y.dot(zd)) / n0;
}

inline double diff_in_means(const DesignContext& ctx, const OutcomeVector& y,
                            const Assignment& z) {
    return diff_in_means(y, z, ctx.n1, ctx.n0);
}

/// Conservative variance estimate s1^2/n1 + s0^2/n0 (group sample variances,
/// divisor n_g - 1). Used to place the default inversion grid.
inline double neyman_se(const OutcomeVector& y, const Assignment& z, int n1, int n0) {
    if (y.size() != z.size()) throw InputError("outcome/assignment length mismatch");
    if (n1 < 2 || n0 < 2) throw InputError("neyman_se requires both groups >= 2");
    double sum1 = 0.0, sum0 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) (z.z[i] == 1 ? sum1 : sum0) += y[i];
    const double mean1 = sum1 / n1;
    const double mean0 = sum0 / n0;
    double ss1 = 0.0, ss0 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double r = y[i] - (z.z[i] == 1 ? mean1 : mean0);
        (z.z[i] == 1 ? ss1 : ss0) += r * r;
    }
    return std::sqrt(ss1 / (n1 - 1) / n1 + ss0 / (n0 - 1) / n0);
}

/// Potential outcomes imputed under the constant-effect null tau0:
/// Y(0) = y - tau0 * z and Y(1) = y + tau0 * (1 - z), so Y(1) - Y(0) = tau0
/// holds exactly for every unit.
inline std::pair<OutcomeVector, OutcomeVector> impute_potential_outcomes(
    const OutcomeVector& y, const Assignment& z, double tau0) {
    if (y.size() != z.size()) throw InputError("outcome/assignment length mismatch");
    const Eigen::VectorXd zd = z.as_doubles();
    OutcomeVector y0 = y - tau0 * zd;
    OutcomeVector y1 = y0;
    y1.array() += tau0;
    return {std::move(y0), std::move(y1)};
}

/// Fisher randomization test of H0: Y_i(1) - Y_i(0) = tau0 for all i.
///
/// Reference assignments come from the same sampler spec that produced the
/// observed assignment, each on its own deterministically derived sub-stream
/// so the reference set is reproducible no matter how the b draws are
/// scheduled. The statistic is the difference in means recomputed in the
/// imputed null world; reference and observed statistics are both centered
/// at tau0, and the count uses strict inequality so ties favor larger p.
inline FrtResult frt_p_value(const DesignContext& ctx, const OutcomeVector& y,
                             const Assignment& z_obs, double tau0,
                             const SamplerSpec& sampler, long b, RngStream& rng) {
    if (b < 1) throw InputError("frt_p_value requires b >= 1");
    const double tau_obs = diff_in_means(ctx, y, z_obs);
    const auto [y0, y1] = impute_potential_outcomes(y, z_obs, tau0);
    const double observed_dev = std::abs(tau_obs - tau0);

    const std::uint64_t base = rng.next_u64();
    long exceed = 0;
    for (long k = 0; k < b; ++k) {
        RngStream sub(derive_seed(base, {static_cast<std::uint64_t>(k)}));
        BalanceDraw draw;
        try {
            draw = draw_assignment(ctx, sampler, sub);
        } catch (const BudgetError& e) {
            throw BudgetError("reference draw " + std::to_string(k + 1) + " of " +
                                  std::to_string(b) + ": " + e.what(),
                              e.best_m(), e.iterations());
        }
        const Eigen::VectorXd zd = draw.assignment.as_doubles();
        const OutcomeVector y_null = y0.array() + tau0 * zd.array();
        const double t_ref = diff_in_means(ctx, y_null, draw.assignment);
        if (std::abs(t_ref - tau0) > observed_dev) ++exceed;
    }
    return FrtResult{static_cast<double>(1 + exceed) / static_cast<double>(b + 1),
                     tau_obs, b, tau0};
}

/// Grid centered at the observed difference in means, spanning +-5 Neyman
/// standard errors with 201 points.
inline TauGrid default_tau_grid(const DesignContext& ctx, const OutcomeVector& y,
                                const Assignment& z_obs) {
    const double tau_obs = diff_in_means(ctx, y, z_obs);
    const double half_width = 5.0 * neyman_se(y, z_obs, ctx.n1, ctx.n0);
    if (!(half_width > 0.0)) {
        throw NumericalError("default tau grid degenerate: Neyman SE is zero");
    }
    return TauGrid{tau_obs - half_width, tau_obs + half_width, half_width / 100.0};
}

/// Confidence interval by test inversion: the interval is the range of grid
/// values tau0 whose randomization test keeps p >= alpha. Each grid point
/// gets a fresh reference set of b draws. An empty accepted set means the
/// grid missed the plausible region and is reported as an input error with
/// the largest p seen.
inline ConfidenceInterval invert_ci(const DesignContext& ctx, const OutcomeVector& y,
                                    const Assignment& z_obs, double alpha,
                                    const SamplerSpec& sampler, long b,
                                    const TauGrid& grid, RngStream& rng) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0,1)");
    if (!(grid.lo < grid.hi)) throw InputError("tau grid requires lo < hi");
    if (!(grid.step > 0.0)) throw InputError("tau grid step must be positive");
    const long points = std::lround((grid.hi - grid.lo) / grid.step) + 1;
    if (points < 3) throw InputError("tau grid must contain at least 3 points");

    double lower = 0.0, upper = 0.0;
    bool any_accepted = false;
    bool boundary_accepted = false;
    double max_p = 0.0;
    for (long k = 0; k < points; ++k) {
        const double tau0 = grid.lo + static_cast<double>(k) * grid.step;
        const FrtResult r = frt_p_value(ctx, y, z_obs, tau0, sampler, b, rng);
        max_p = std::max(max_p, r.p_value);
        if (r.p_value >= alpha) {
            if (!any_accepted) lower = tau0;
            upper = tau0;
            any_accepted = true;
            if (k == 0 || k == points - 1) boundary_accepted = true;
        }
    }
    if (!any_accepted) {
        throw InputError("empty confidence interval: no grid point accepted (max p = " +
                         std::to_string(max_p) + "); widen or recenter the tau grid");
    }
    return ConfidenceInterval{lower,   upper,     alpha,
                              grid.lo, grid.hi,   grid.step,
                              boundary_accepted};
}

}  // namespace rerand

#endif  // RERAND_INFERENCE_HPP
