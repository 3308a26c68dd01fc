#ifndef RERAND_SIMLAB_HPP
#define RERAND_SIMLAB_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rerand/balance.hpp"
#include "rerand/errors.hpp"
#include "rerand/inference.hpp"
#include "rerand/rng.hpp"
#include "rerand/samplers.hpp"

namespace rerand {

/// Linear potential-outcome model Y_i = beta0 + beta' X_i + tau * z_i + eps_i
/// with eps_i ~ N(0, noise_sd^2).
struct OutcomeModel {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double tau = 0.5;
    double noise_sd = 1.0;
};

/// The study default: zero intercept, all-ones slopes, tau = 0.5, unit noise.
inline OutcomeModel default_outcome_model(int d, double tau = 0.5,
                                          double noise_sd = 1.0) {
    return OutcomeModel{0.0, Eigen::VectorXd::Ones(d), tau, noise_sd};
}

/// Monte Carlo study configuration shared by all runners. n1 = 0 resolves to
/// n / 2. workers = 0 resolves to the hardware thread count.
struct StudyConfig {
    int n = 200;
    int n1 = 0;
    std::vector<int> dims{2, 5, 10, 20, 50};
    double p_accept = 0.01;
    std::vector<Method> methods{Method::cr, Method::arr, Method::psrr, Method::lgr};
    int reps = 200;
    int frt_reps = 50;
    double alpha = 0.05;
    std::uint64_t master_seed = 0;
    double tau = 0.5;
    double noise_sd = 1.0;
    LgrConfig lgr{};
    long arr_max_draws = 100000;
    long psrr_max_sweeps = 10000;
    int workers = 0;
};

/// One (method, d) result cell. Fields a study does not produce stay empty;
/// delta/eta are set only by the sensitivity sweep. Aggregates exclude
/// censored replications (sampler budget exhausted or diverged), whose count
/// is reported.
struct CellResult {
    Method method = Method::cr;
    int d = 0;
    std::optional<double> delta;
    std::optional<double> eta;
    std::optional<double> mean_time_s;
    std::optional<double> time_ci_lo;
    std::optional<double> time_ci_hi;
    std::optional<double> bias;
    std::optional<double> sd_tau;
    std::optional<double> coverage;
    std::optional<double> power;
    std::optional<double> r_squared;
    std::optional<double> var_ratio;
    long censored_reps = 0;
};

struct ExperimentReport {
    std::vector<CellResult> cells;
};

inline constexpr int kBootstrapResamples = 1000;
inline constexpr double kBootstrapLevel = 0.95;

/// Standard normal covariates, drawn unit by unit (row-major) with the
/// stream's Box-Muller normals.
inline CovariateMatrix generate_covariates(int n, int d, RngStream& rng) {
    if (n < 4) throw InputError("generate_covariates requires n >= 4");
    if (d < 1) throw InputError("generate_covariates requires d >= 1");
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    }
    return CovariateMatrix(std::move(x));
}

inline OutcomeVector generate_outcomes(const CovariateMatrix& x, const Assignment& z,
                                       const OutcomeModel& model, RngStream& rng) {
    if (model.beta.size() != x.dims()) {
        throw InputError("outcome model slope length does not match covariates");
    }
    if (z.size() != x.units()) {
        throw InputError("assignment length does not match covariates");
    }
    if (!(model.noise_sd > 0.0) || !std::isfinite(model.noise_sd)) {
        throw InputError("outcome model noise_sd must be positive and finite");
    }
    const Eigen::VectorXd eps = rng.normal_vector(x.units());
    return ((x.values() * model.beta).array() + model.beta0 +
            model.tau * z.as_doubles().array() + model.noise_sd * eps.array())
        .matrix();
}

/// Percentile bootstrap interval for the mean of samples.
inline std::pair<double, double> bootstrap_ci(const std::vector<double>& samples,
                                              double level, int resamples,
                                              RngStream& rng) {
    if (samples.size() < 2) throw InputError("bootstrap_ci requires >= 2 samples");
    if (resamples < 100) throw InputError("bootstrap_ci requires >= 100 resamples");
    if (!(level > 0.0 && level < 1.0)) throw InputError("bootstrap level in (0,1)");

    const auto n = static_cast<int>(samples.size());
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (int r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            sum += samples[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
        }
        means[static_cast<std::size_t>(r)] = sum / n;
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&means](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, means.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return means[lo] + frac * (means[hi] - means[lo]);
    };
    const double tail = (1.0 - level) / 2.0;
    return {quantile(tail), quantile(1.0 - tail)};
}

namespace detail {

inline constexpr std::uint64_t kTimingTag = 1;
inline constexpr std::uint64_t kEstimationTag = 2;
inline constexpr std::uint64_t kInferenceTag = 3;
inline constexpr std::uint64_t kSensitivityTag = 4;
inline constexpr std::uint64_t kBootstrapTag = 0xB0075;

inline std::uint64_t method_tag(Method m) {
    return static_cast<std::uint64_t>(m) + 1;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

inline int resolve_n1(const StudyConfig& cfg) {
    return cfg.n1 > 0 ? cfg.n1 : cfg.n / 2;
}

/// Runs fn(0..total-1) across a worker pool. Work items land in
/// caller-preallocated slots keyed by index, so results are identical for any
/// worker count; only scheduling differs.
inline void parallel_for(long total, int workers,
                         const std::function<void(long)>& fn) {
    if (total <= 0) return;
    workers = std::min<long>(workers, total);
    if (workers <= 1) {
        for (long i = 0; i < total; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::atomic<bool> stop{false};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto work = [&] {
        while (!stop.load(std::memory_order_relaxed)) {
            const long i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= total) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                stop.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline SamplerSpec sampler_spec_for(const StudyConfig& cfg, Method m) {
    SamplerSpec spec;
    spec.method = m;
    spec.lgr = cfg.lgr;
    spec.arr_max_draws = cfg.arr_max_draws;
    spec.psrr_max_sweeps = cfg.psrr_max_sweeps;
    return spec;
}

/// Per-replication record shared by the study loops. Censored replications
/// carry no statistics.
struct RepRecord {
    bool censored = false;
    double seconds = 0.0;
    double tau_hat = 0.0;
    double quad_form = 0.0;
    bool covered = false;
    bool rejected = false;
};

}  // namespace detail

inline void validate_study_config(const StudyConfig& cfg) {
    if (cfg.n < 4) throw InputError("study requires n >= 4");
    if (cfg.reps < 2) throw InputError("study requires reps >= 2");
    if (cfg.dims.empty()) throw InputError("study requires at least one dimension");
    for (int d : cfg.dims) {
        if (d < 1) throw InputError("dimensions must be >= 1");
        if (d >= cfg.n) {
            throw InputError("dimension d = " + std::to_string(d) +
                             " must be smaller than n = " + std::to_string(cfg.n));
        }
    }
    if (cfg.methods.empty()) throw InputError("study requires at least one method");
    const int n1 = detail::resolve_n1(cfg);
    if (n1 < 2 || n1 > cfg.n - 2) {
        throw InputError("study requires 2 <= n1 <= n - 2");
    }
    if (!(cfg.p_accept > 0.0 && cfg.p_accept < 1.0)) {
        throw InputError("p_accept must lie in (0,1)");
    }
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
        throw InputError("alpha must lie in (0,1)");
    }
    if (cfg.frt_reps < 1) throw InputError("frt_reps must be >= 1");
    if (!(cfg.noise_sd > 0.0)) throw InputError("noise_sd must be positive");
    if (!(cfg.lgr.delta > 0.0)) throw InputError("temperature delta must be positive");
    if (!(cfg.lgr.eta > 0.0)) throw InputError("learning rate eta must be positive");
    if (cfg.lgr.max_iters < 1) throw InputError("max_iters must be >= 1");
    if (cfg.workers < 0) throw InputError("workers must be >= 0");
}

/// Per-cell progress hook for the study runners; invoked after each finished
/// (method, d) cell.
using CellCallback = std::function<void(const CellResult&)>;

/// Wall time to produce one balanced assignment, per (method, d), with a
/// fresh covariate draw each replication. CR rows time a single
/// unconstrained draw as the baseline.
inline ExperimentReport run_timing_study(const StudyConfig& cfg,
                                         const CellCallback& on_cell = {}) {
    validate_study_config(cfg);
    const int n1 = detail::resolve_n1(cfg);
    const int workers = detail::resolve_workers(cfg.workers);
    ExperimentReport report;

    for (int d : cfg.dims) {
        for (Method method : cfg.methods) {
            const SamplerSpec spec = detail::sampler_spec_for(cfg, method);
            std::vector<detail::RepRecord> recs(static_cast<std::size_t>(cfg.reps));
            detail::parallel_for(cfg.reps, workers, [&](long r) {
                RngStream rng(derive_seed(
                    cfg.master_seed,
                    {detail::kTimingTag, detail::method_tag(method),
                     static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(r)}));
                CovariateMatrix x = generate_covariates(cfg.n, d, rng);
                const DesignContext ctx =
                    build_design_context(std::move(x), n1, cfg.p_accept);
                auto& rec = recs[static_cast<std::size_t>(r)];
                try {
                    const BalanceDraw draw = draw_assignment(ctx, spec, rng);
                    rec.seconds = draw.elapsed_seconds;
                } catch (const BudgetError&) {
                    rec.censored = true;
                } catch (const DivergedError&) {
                    rec.censored = true;
                }
            });

            CellResult cell;
            cell.method = method;
            cell.d = d;
            std::vector<double> times;
            times.reserve(recs.size());
            for (const auto& rec : recs) {
                if (rec.censored) {
                    ++cell.censored_reps;
                } else {
                    times.push_back(rec.seconds);
                }
            }
            if (times.size() >= 2) {
                cell.mean_time_s = detail::mean_of(times);
                RngStream boot_rng(derive_seed(
                    cfg.master_seed,
                    {detail::kTimingTag, detail::method_tag(method),
                     static_cast<std::uint64_t>(d), detail::kBootstrapTag}));
                const auto [lo, hi] = bootstrap_ci(times, kBootstrapLevel,
                                                   kBootstrapResamples, boot_rng);
                cell.time_ci_lo = lo;
                cell.time_ci_hi = hi;
            }
            report.cells.push_back(std::move(cell));
            if (on_cell) on_cell(report.cells.back());
        }
    }
    return report;
}

/// Bias and SD of the difference-in-means estimator per (method, d), plus the
/// variance ratio against complete randomization and the variance-reduction
/// bound's R^2 computed from the realized covariate covariances and the
/// empirical CR variance. A CR cell is added automatically when absent so the
/// ratio has a denominator. Time columns stay empty: this report must be
/// byte-reproducible from the seed.
inline ExperimentReport run_estimation_study(const StudyConfig& cfg,
                                             const CellCallback& on_cell = {}) {
    validate_study_config(cfg);
    const int n1 = detail::resolve_n1(cfg);
    const int workers = detail::resolve_workers(cfg.workers);

    std::vector<Method> methods = cfg.methods;
    if (std::find(methods.begin(), methods.end(), Method::cr) == methods.end()) {
        methods.insert(methods.begin(), Method::cr);
    }

    ExperimentReport report;
    for (int d : cfg.dims) {
        const OutcomeModel model = default_outcome_model(d, cfg.tau, cfg.noise_sd);
        double var_cr = 0.0;
        double r_squared = 0.0;
        bool have_cr = false;

        for (Method method : methods) {
            const SamplerSpec spec = detail::sampler_spec_for(cfg, method);
            std::vector<detail::RepRecord> recs(static_cast<std::size_t>(cfg.reps));
            detail::parallel_for(cfg.reps, workers, [&](long r) {
                RngStream rng(derive_seed(
                    cfg.master_seed,
                    {detail::kEstimationTag, detail::method_tag(method),
                     static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(r)}));
                CovariateMatrix x = generate_covariates(cfg.n, d, rng);
                const DesignContext ctx =
                    build_design_context(std::move(x), n1, cfg.p_accept);
                auto& rec = recs[static_cast<std::size_t>(r)];
                try {
                    const BalanceDraw draw = draw_assignment(ctx, spec, rng);
                    const OutcomeVector y =
                        generate_outcomes(ctx.covariates, draw.assignment, model, rng);
                    rec.tau_hat = diff_in_means(ctx, y, draw.assignment);
                    rec.quad_form = model.beta.dot(ctx.sample_cov * model.beta);
                } catch (const BudgetError&) {
                    rec.censored = true;
                } catch (const DivergedError&) {
                    rec.censored = true;
                }
            });

            CellResult cell;
            cell.method = method;
            cell.d = d;
            std::vector<double> taus, quads;
            taus.reserve(recs.size());
            for (const auto& rec : recs) {
                if (rec.censored) {
                    ++cell.censored_reps;
                } else {
                    taus.push_back(rec.tau_hat);
                    quads.push_back(rec.quad_form);
                }
            }
            if (taus.size() >= 2) {
                const double var_tau = detail::sample_variance(taus);
                cell.bias = detail::mean_of(taus) - cfg.tau;
                cell.sd_tau = std::sqrt(var_tau);
                if (method == Method::cr) {
                    var_cr = var_tau;
                    have_cr = var_cr > 0.0;
                    if (have_cr) {
                        const double scale =
                            static_cast<double>(cfg.n) /
                            (static_cast<double>(n1) *
                             static_cast<double>(cfg.n - n1));
                        r_squared = scale * detail::mean_of(quads) / var_cr;
                    }
                }
                if (have_cr) {
                    cell.var_ratio = var_tau / var_cr;
                    cell.r_squared = r_squared;
                }
            }
            report.cells.push_back(std::move(cell));
            if (on_cell) on_cell(report.cells.back());
        }
    }
    return report;
}

/// Coverage of the inverted-test confidence interval and power of the
/// randomization test of tau0 = 0, per (method, d). An empty inverted
/// interval rejects every grid value and counts as non-covering. Time
/// columns stay empty: this report must be byte-reproducible from the seed.
inline ExperimentReport run_inference_study(const StudyConfig& cfg,
                                            const CellCallback& on_cell = {}) {
    validate_study_config(cfg);
    const int n1 = detail::resolve_n1(cfg);
    const int workers = detail::resolve_workers(cfg.workers);
    ExperimentReport report;

    for (int d : cfg.dims) {
        const OutcomeModel model = default_outcome_model(d, cfg.tau, cfg.noise_sd);
        for (Method method : cfg.methods) {
            const SamplerSpec spec = detail::sampler_spec_for(cfg, method);
            std::vector<detail::RepRecord> recs(static_cast<std::size_t>(cfg.reps));
            detail::parallel_for(cfg.reps, workers, [&](long r) {
                RngStream rng(derive_seed(
                    cfg.master_seed,
                    {detail::kInferenceTag, detail::method_tag(method),
                     static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(r)}));
                CovariateMatrix x = generate_covariates(cfg.n, d, rng);
                const DesignContext ctx =
                    build_design_context(std::move(x), n1, cfg.p_accept);
                auto& rec = recs[static_cast<std::size_t>(r)];
                try {
                    const BalanceDraw draw = draw_assignment(ctx, spec, rng);
                    const OutcomeVector y =
                        generate_outcomes(ctx.covariates, draw.assignment, model, rng);
                    const TauGrid grid = default_tau_grid(ctx, y, draw.assignment);
                    try {
                        const ConfidenceInterval ci =
                            invert_ci(ctx, y, draw.assignment, cfg.alpha, spec,
                                      cfg.frt_reps, grid, rng);
                        rec.covered = ci.lower <= cfg.tau && cfg.tau <= ci.upper;
                    } catch (const InputError&) {
                        rec.covered = false;  // empty interval: rejects everything
                    }
                    const FrtResult frt = frt_p_value(ctx, y, draw.assignment, 0.0,
                                                      spec, cfg.frt_reps, rng);
                    rec.rejected = frt.p_value <= cfg.alpha;
                } catch (const BudgetError&) {
                    rec.censored = true;
                } catch (const DivergedError&) {
                    rec.censored = true;
                }
            });

            CellResult cell;
            cell.method = method;
            cell.d = d;
            long used = 0, covered = 0, rejected = 0;
            for (const auto& rec : recs) {
                if (rec.censored) {
                    ++cell.censored_reps;
                    continue;
                }
                ++used;
                covered += rec.covered ? 1 : 0;
                rejected += rec.rejected ? 1 : 0;
            }
            if (used > 0) {
                cell.coverage = static_cast<double>(covered) / static_cast<double>(used);
                cell.power = static_cast<double>(rejected) / static_cast<double>(used);
            }
            report.cells.push_back(std::move(cell));
            if (on_cell) on_cell(report.cells.back());
        }
    }
    return report;
}

/// Langevin-sampler hyperparameter sweep: timing plus bias/SD cells for each
/// temperature (learning rate fixed at 1) and each learning rate (temperature
/// fixed at 0.5), over every configured d. Duplicate (delta, eta) pairs
/// collapse to one cell.
inline ExperimentReport sensitivity_sweep(const StudyConfig& cfg,
                                          const std::vector<double>& deltas,
                                          const std::vector<double>& etas,
                                          const CellCallback& on_cell = {}) {
    validate_study_config(cfg);
    if (deltas.empty() || etas.empty()) {
        throw InputError("sensitivity sweep requires non-empty delta and eta lists");
    }
    const int n1 = detail::resolve_n1(cfg);
    const int workers = detail::resolve_workers(cfg.workers);

    std::vector<std::pair<double, double>> pairs;
    auto add_pair = [&pairs](double delta, double eta) {
        if (!(delta > 0.0) || !(eta > 0.0)) {
            throw InputError("sensitivity sweep requires positive delta and eta");
        }
        const std::pair<double, double> p{delta, eta};
        if (std::find(pairs.begin(), pairs.end(), p) == pairs.end()) {
            pairs.push_back(p);
        }
    };
    for (double delta : deltas) add_pair(delta, 1.0);
    for (double eta : etas) add_pair(0.5, eta);

    ExperimentReport report;
    for (int d : cfg.dims) {
        const OutcomeModel model = default_outcome_model(d, cfg.tau, cfg.noise_sd);
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            StudyConfig cell_cfg = cfg;
            cell_cfg.lgr.delta = pairs[pi].first;
            cell_cfg.lgr.eta = pairs[pi].second;
            const SamplerSpec spec = detail::sampler_spec_for(cell_cfg, Method::lgr);
            std::vector<detail::RepRecord> recs(static_cast<std::size_t>(cfg.reps));
            detail::parallel_for(cfg.reps, workers, [&](long r) {
                RngStream rng(derive_seed(
                    cfg.master_seed,
                    {detail::kSensitivityTag, static_cast<std::uint64_t>(pi),
                     static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(r)}));
                CovariateMatrix x = generate_covariates(cfg.n, d, rng);
                const DesignContext ctx =
                    build_design_context(std::move(x), n1, cfg.p_accept);
                auto& rec = recs[static_cast<std::size_t>(r)];
                try {
                    const BalanceDraw draw = draw_assignment(ctx, spec, rng);
                    rec.seconds = draw.elapsed_seconds;
                    const OutcomeVector y =
                        generate_outcomes(ctx.covariates, draw.assignment, model, rng);
                    rec.tau_hat = diff_in_means(ctx, y, draw.assignment);
                } catch (const BudgetError&) {
                    rec.censored = true;
                } catch (const DivergedError&) {
                    rec.censored = true;
                }
            });

            CellResult cell;
            cell.method = Method::lgr;
            cell.d = d;
            cell.delta = pairs[pi].first;
            cell.eta = pairs[pi].second;
            std::vector<double> times, taus;
            for (const auto& rec : recs) {
                if (rec.censored) {
                    ++cell.censored_reps;
                    continue;
                }
                times.push_back(rec.seconds);
                taus.push_back(rec.tau_hat);
            }
            if (times.size() >= 2) {
                cell.mean_time_s = detail::mean_of(times);
                RngStream boot_rng(derive_seed(
                    cfg.master_seed,
                    {detail::kSensitivityTag, static_cast<std::uint64_t>(pi),
                     static_cast<std::uint64_t>(d), detail::kBootstrapTag}));
                const auto [lo, hi] = bootstrap_ci(times, kBootstrapLevel,
                                                   kBootstrapResamples, boot_rng);
                cell.time_ci_lo = lo;
                cell.time_ci_hi = hi;
                cell.bias = detail::mean_of(taus) - cfg.tau;
                cell.sd_tau = std::sqrt(detail::sample_variance(taus));
            }
            report.cells.push_back(std::move(cell));
            if (on_cell) on_cell(report.cells.back());
        }
    }
    return report;
}

}  // namespace rerand

#endif  // RERAND_SIMLAB_HPP
