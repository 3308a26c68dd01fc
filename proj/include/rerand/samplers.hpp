#ifndef RERAND_SAMPLERS_HPP
#define RERAND_SAMPLERS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rerand/balance.hpp"
#include "rerand/errors.hpp"
#include "rerand/rng.hpp"

namespace rerand {

/// Latent scores driving the Langevin sampler's continuous relaxation.
using LatentState = Eigen::VectorXd;

/// Langevin-gradient sampler configuration. The temperature delta sets the
/// sigmoid sharpness and, through sqrt(2*eta*delta), the injected noise
/// scale; eta is the learning rate.
struct LgrConfig {
    double delta = 0.5;
    double eta = 1.0;
    long max_iters = 100000;
};

/// One sampler outcome: the assignment, its achieved balance value, how many
/// iterations the sampler spent, and the wall time of the call.
struct BalanceDraw {
    Assignment assignment;
    double m_value = 0.0;
    long iterations = 0;
    double elapsed_seconds = 0.0;
};

namespace detail {

class WallTimer {
public:
    WallTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Temperature-scaled logistic with the exponent clamped to +-500 so
/// saturated scores stay finite; results are pinned inside the open unit
/// interval so downstream logs and divisions stay defined.
inline double sigmoid_clamped(double x) {
    x = std::clamp(x, -500.0, 500.0);
    double v = 1.0 / (1.0 + std::exp(-x));
    if (v >= 1.0) v = std::nextafter(1.0, 0.0);
    if (v <= 0.0) v = std::nextafter(0.0, 1.0);
    return v;
}

/// Soft assignment together with its mirrored complement. The complement is
/// computed as sigmoid(-theta/delta) rather than 1 - sigmoid(theta/delta):
/// that way negating theta swaps the two vectors bit-for-bit, which keeps
/// the whole update map exactly odd in theta (the sampler's sign-symmetry
/// argument needs this).
struct SoftWeights {
    Eigen::VectorXd treat;
    Eigen::VectorXd control;
};

inline SoftWeights soft_weights(const LatentState& theta, double delta) {
    const Eigen::Index n = theta.size();
    SoftWeights w{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double q = theta[i] / delta;
        w.treat[i] = sigmoid_clamped(q);
        w.control[i] = sigmoid_clamped(-q);
    }
    return w;
}

/// Gradient of the soft balance metric with respect to the weights, with
/// both group weight vectors explicit (see soft_weights). Applying the
/// quotient rule to the two weighted means gives, per unit,
///   dM/dw_i = 2 [Sigma^{-1} Delta]' [ (X_i - mean_t)/n1s + (X_i - mean_c)/n0s ].
inline Eigen::VectorXd grad_weights(const DesignContext& ctx, const Eigen::VectorXd& wt,
                                    const Eigen::VectorXd& wc) {
    const double n1s = wt.sum();
    const double n0s = wc.sum();
    if (n1s < kSoftGroupFloor || n0s < kSoftGroupFloor) {
        throw NumericalError("degenerate groups: soft group sizes " +
                             std::to_string(n1s) + " / " + std::to_string(n0s) +
                             " fell below " + std::to_string(kSoftGroupFloor));
    }
    const Eigen::VectorXd mean_t = (ctx.x().transpose() * wt) / n1s;
    const Eigen::VectorXd mean_c = (ctx.x().transpose() * wc) / n0s;
    const Eigen::VectorXd delta = mean_t - mean_c;
    const Eigen::VectorXd g = 2.0 * (ctx.sigma_inv * delta);

    const double c1 = 1.0 / n1s;
    const double c0 = 1.0 / n0s;
    const double shift = c1 * g.dot(mean_t) + c0 * g.dot(mean_c);
    return (((c1 + c0) * (ctx.x() * g)).array() - shift).matrix();
}

}  // namespace detail

/// Soft assignment: componentwise temperature-scaled sigmoid of the latent
/// scores, strictly inside (0,1).
inline Eigen::VectorXd soft_assignment(const LatentState& theta, double delta) {
    if (!(delta > 0.0)) throw InputError("temperature delta must be positive");
    return detail::soft_weights(theta, delta).treat;
}

/// Gradient of the soft balance metric with respect to the soft assignment.
inline Eigen::VectorXd grad_soft_mahalanobis(const DesignContext& ctx,
                                             const Eigen::VectorXd& ztilde) {
    if (ztilde.size() != ctx.n()) {
        throw InputError("soft assignment length does not match context");
    }
    return detail::grad_weights(ctx, ztilde,
                                Eigen::VectorXd::Ones(ztilde.size()) - ztilde);
}

/// Gradient of the composed objective M(sigmoid(theta/delta)) with respect to
/// the latent scores: the weight-space gradient scaled componentwise by the
/// sigmoid derivative gamma_i = z_i (1 - z_i) / delta.
inline Eigen::VectorXd grad_latent(const DesignContext& ctx, const LatentState& theta,
                                   double delta) {
    if (!(delta > 0.0)) throw InputError("temperature delta must be positive");
    if (theta.size() != ctx.n()) {
        throw InputError("latent state length does not match context");
    }
    const detail::SoftWeights w = detail::soft_weights(theta, delta);
    const Eigen::VectorXd gs = detail::grad_weights(ctx, w.treat, w.control);
    return (gs.array() * (w.treat.array() * w.control.array()) / delta).matrix();
}

/// Hard projection: treatment goes to the n1 largest latent scores, ties
/// broken deterministically toward the lower index.
inline Assignment project_top_n1(const LatentState& theta, int n1) {
    const Eigen::Index n = theta.size();
    if (n1 < 1 || n1 >= n) {
        throw InputError("project_top_n1 requires 1 <= n1 < n");
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + n1, order.end(),
                     [&theta](int i, int j) {
                         if (theta[i] != theta[j]) return theta[i] > theta[j];
                         return i < j;
                     });
    Assignment a{Eigen::VectorXi::Zero(n)};
    for (int k = 0; k < n1; ++k) a.z[order[static_cast<std::size_t>(k)]] = 1;
    return a;
}

/// One deterministic Langevin update: theta - eta * grad + sqrt(2*eta*delta) * noise.
/// Exposed separately so the update map itself can be exercised; it is exactly
/// odd under (theta, noise) -> (-theta, -noise).
inline LatentState lgr_step(const DesignContext& ctx, const LatentState& theta,
                            double delta, double eta, const Eigen::VectorXd& noise) {
    const Eigen::VectorXd grad = grad_latent(ctx, theta, delta);
    const double noise_scale = std::sqrt(2.0 * eta * delta);
    return theta - eta * grad + noise_scale * noise;
}

/// Complete randomization: uniform over all assignments with exactly n1
/// treated units, via a partial Fisher-Yates shuffle.
inline Assignment sample_cr(const DesignContext& ctx, RngStream& rng) {
    const int n = ctx.n();
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < ctx.n1; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(i, n - 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    Assignment a{Eigen::VectorXi::Zero(n)};
    for (int i = 0; i < ctx.n1; ++i) a.z[idx[static_cast<std::size_t>(i)]] = 1;
    return a;
}

/// Acceptance-rejection rerandomization: redraw complete randomizations until
/// M <= a. iterations reports the number of draws taken.
inline BalanceDraw sample_arr(const DesignContext& ctx, RngStream& rng,
                              long max_draws = 100000) {
    if (max_draws < 1) throw InputError("sample_arr requires max_draws >= 1");
    const detail::WallTimer timer;
    double best_m = std::numeric_limits<double>::infinity();
    for (long draw = 1; draw <= max_draws; ++draw) {
        Assignment a = sample_cr(ctx, rng);
        const double m = mahalanobis(ctx, a);
        best_m = std::min(best_m, m);
        if (m <= ctx.threshold_a) {
            return BalanceDraw{std::move(a), m, draw, timer.seconds()};
        }
    }
    throw BudgetError("acceptance-rejection budget exhausted", best_m, max_draws);
}

/// Pair-switching rerandomization: greedy local search over single
/// treated/control swaps. Each proposal picks one treated and one control
/// unit uniformly, computes M for the swapped assignment, and keeps the swap
/// only if M strictly decreases. The run restarts from a fresh complete
/// randomization after a full sweep (n proposals) without an accepted swap.
/// iterations counts swap proposals; the total budget is max_sweeps * n.
///
/// descent_trace, when given, records one inner vector per run segment with
/// the M value after the initial draw and after each accepted swap.
inline BalanceDraw sample_psrr(const DesignContext& ctx, RngStream& rng,
                               long max_sweeps = 10000,
                               std::vector<std::vector<double>>* descent_trace = nullptr) {
    if (max_sweeps < 1) throw InputError("sample_psrr requires max_sweeps >= 1");
    const detail::WallTimer timer;
    const int n = ctx.n();
    const long max_proposals = max_sweeps * static_cast<long>(n);

    double best_m = std::numeric_limits<double>::infinity();
    long proposals = 0;

    while (true) {
        // Fresh run segment.
        Assignment a = sample_cr(ctx, rng);
        std::vector<int> treated, control;
        treated.reserve(static_cast<std::size_t>(ctx.n1));
        control.reserve(static_cast<std::size_t>(ctx.n0));
        for (int i = 0; i < n; ++i) (a.z[i] == 1 ? treated : control).push_back(i);

        double m_cur = mahalanobis(ctx, a);
        best_m = std::min(best_m, m_cur);
        if (descent_trace) descent_trace->push_back({m_cur});

        long stalled = 0;
        while (m_cur > ctx.threshold_a) {
            if (stalled >= n) break;  // full sweep without progress: restart
            if (proposals >= max_proposals) {
                throw BudgetError("pair-switching budget exhausted", best_m, proposals);
            }
            ++proposals;

            const auto ti = static_cast<std::size_t>(rng.uniform_int(0, ctx.n1 - 1));
            const auto ci = static_cast<std::size_t>(rng.uniform_int(0, ctx.n0 - 1));
            const int unit_t = treated[ti];
            const int unit_c = control[ci];

            a.z[unit_t] = 0;
            a.z[unit_c] = 1;
            const double m_new = mahalanobis(ctx, a);

            if (m_new < m_cur) {
                std::swap(treated[ti], control[ci]);
                m_cur = m_new;
                best_m = std::min(best_m, m_cur);
                if (descent_trace) descent_trace->back().push_back(m_cur);
                stalled = 0;
            } else {
                a.z[unit_t] = 1;  // revert
                a.z[unit_c] = 0;
                ++stalled;
            }
        }

        if (m_cur <= ctx.threshold_a) {
            return BalanceDraw{std::move(a), m_cur, proposals, timer.seconds()};
        }
        if (proposals >= max_proposals) {
            throw BudgetError("pair-switching budget exhausted", best_m, proposals);
        }
    }
}

/// Langevin-gradient rerandomization: stochastic gradient Langevin dynamics
/// on latent scores over the soft relaxation of M, projecting to the top-n1
/// hard assignment each pass and stopping as soon as the hard assignment is
/// balanced. iterations counts Langevin updates, so a lucky initialization
/// returns with iterations = 0.
inline BalanceDraw sample_lgr(const DesignContext& ctx, const LgrConfig& cfg,
                              RngStream& rng) {
    if (!(cfg.delta > 0.0)) throw InputError("temperature delta must be positive");
    if (!(cfg.eta > 0.0)) throw InputError("learning rate eta must be positive");
    if (cfg.max_iters < 1) throw InputError("max_iters must be >= 1");

    const detail::WallTimer timer;
    LatentState theta = rng.normal_vector(ctx.n());
    double best_m = std::numeric_limits<double>::infinity();

    for (long iter = 0;; ++iter) {
        if (!theta.allFinite()) {
            throw DivergedError("latent scores became non-finite", iter);
        }
        Assignment a = project_top_n1(theta, ctx.n1);
        const double m = mahalanobis(ctx, a);
        best_m = std::min(best_m, m);
        if (m <= ctx.threshold_a) {
            return BalanceDraw{std::move(a), m, iter, timer.seconds()};
        }
        if (iter >= cfg.max_iters) {
            throw BudgetError("langevin-gradient budget exhausted", best_m, iter);
        }
        const Eigen::VectorXd noise = rng.normal_vector(ctx.n());
        theta = lgr_step(ctx, theta, cfg.delta, cfg.eta, noise);
    }
}

/// Sampler identifiers shared by the CLI, the study runners and inference.
enum class Method { cr, arr, psrr, lgr };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::cr: return "cr";
        case Method::arr: return "arr";
        case Method::psrr: return "psrr";
        case Method::lgr: return "lgr";
    }
    return "?";
}

inline Method method_from_name(const std::string& name) {
    if (name == "cr") return Method::cr;
    if (name == "arr") return Method::arr;
    if (name == "psrr") return Method::psrr;
    if (name == "lgr") return Method::lgr;
    throw InputError("unknown sampler method '" + name +
                     "' (expected cr, arr, psrr or lgr)");
}

/// A fully configured sampler. Inference draws its reference sets through
/// this so the reference distribution always uses the same mechanism and
/// hyperparameters as the observed assignment.
struct SamplerSpec {
    Method method = Method::lgr;
    LgrConfig lgr{};
    long arr_max_draws = 100000;
    long psrr_max_sweeps = 10000;
};

/// Draws one assignment with the given sampler. CR reports iterations = 0 and
/// its (unconstrained) achieved M.
inline BalanceDraw draw_assignment(const DesignContext& ctx, const SamplerSpec& spec,
                                   RngStream& rng) {
    switch (spec.method) {
        case Method::cr: {
            const detail::WallTimer timer;
            Assignment a = sample_cr(ctx, rng);
            const double m = mahalanobis(ctx, a);
            return BalanceDraw{std::move(a), m, 0, timer.seconds()};
        }
        case Method::arr:
            return sample_arr(ctx, rng, spec.arr_max_draws);
        case Method::psrr:
            return sample_psrr(ctx, rng, spec.psrr_max_sweeps);
        case Method::lgr:
            return sample_lgr(ctx, spec.lgr, rng);
    }
    throw InputError("unknown sampler method");
}

}  // namespace rerand

#endif  // RERAND_SAMPLERS_HPP
