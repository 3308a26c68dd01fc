#ifndef RERAND_BALANCE_HPP
#define RERAND_BALANCE_HPP

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "rerand/chi_squared.hpp"
#include "rerand/errors.hpp"

namespace rerand {

/// Smallest soft group size the balance metric accepts. A soft assignment
/// whose group mass collapses below this has effectively left the feasible
/// region, which signals diverged dynamics; we error instead of clamping.
inline constexpr double kSoftGroupFloor = 1e-6;

/// Reciprocal condition number below which the covariate covariance is
/// treated as singular.
inline constexpr double kRcondFloor = 1e-12;

/// n x d matrix of covariate readings, one row per unit. Validated on
/// construction: finite entries, n >= 4, d >= 1.
class CovariateMatrix {
public:
    explicit CovariateMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
        if (values_.rows() < 4) {
            throw InputError("covariate matrix needs at least 4 units, got " +
                             std::to_string(values_.rows()));
        }
        if (values_.cols() < 1) {
            throw InputError("covariate matrix needs at least 1 column");
        }
        if (!values_.allFinite()) {
            throw InputError("covariate matrix contains non-finite entries");
        }
    }

    Eigen::Index units() const { return values_.rows(); }
    Eigen::Index dims() const { return values_.cols(); }
    const Eigen::MatrixXd& values() const { return values_; }

private:
    Eigen::MatrixXd values_;
};

/// Binary treatment assignment (1 = treatment, 0 = control).
struct Assignment {
    Eigen::VectorXi z;

    Eigen::Index size() const { return z.size(); }
    int treated() const { return z.sum(); }
    Eigen::VectorXd as_doubles() const { return z.cast<double>(); }
};

/// Immutable experiment frame: covariates, arm sizes, covariance machinery
/// and the balance threshold. Built once via build_design_context and safe
/// to share across concurrent workers.
struct DesignContext {
    CovariateMatrix covariates;
    int n1 = 0;
    int n0 = 0;
    Eigen::MatrixXd sample_cov;  // S^2_X, divisor n-1
    Eigen::MatrixXd sigma_inv;   // inverse of (n/(n1*n0)) * S^2_X
    double threshold_a = 0.0;
    double p_accept = 0.0;

    int n() const { return static_cast<int>(covariates.units()); }
    int d() const { return static_cast<int>(covariates.dims()); }
    const Eigen::MatrixXd& x() const { return covariates.values(); }
};

/// Sample covariance of the rows of X, centered at column means, divisor n-1.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    if (n < 2) throw InputError("sample_covariance requires at least 2 rows");
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

/// Builds the design context: S^2_X, Sigma = (n/(n1*n0)) S^2_X, its inverse
/// via Cholesky, and the balance threshold as the p_accept quantile of a
/// chi-squared with d degrees of freedom. Errors on singular covariance
/// rather than regularizing; dropping collinear columns is the caller's call.
inline DesignContext build_design_context(CovariateMatrix covariates, int n1,
                                          double p_accept) {
    const int n = static_cast<int>(covariates.units());
    const int d = static_cast<int>(covariates.dims());
    if (n1 <= 0 || n1 >= n) {
        throw InputError("treated count n1 must satisfy 0 < n1 < n, got n1=" +
                         std::to_string(n1) + " with n=" + std::to_string(n));
    }
    if (n <= d) {
        throw InputError("need more units than covariates for an invertible "
                         "covariance (n=" + std::to_string(n) +
                         ", d=" + std::to_string(d) + ")");
    }
    if (!(p_accept > 0.0 && p_accept < 1.0)) {
        throw InputError("acceptance probability must lie in (0,1)");
    }

    const int n0 = n - n1;
    const Eigen::MatrixXd s2 = sample_covariance(covariates.values());
    const double scale = static_cast<double>(n) /
                         (static_cast<double>(n1) * static_cast<double>(n0));
    const Eigen::MatrixXd sigma = scale * s2;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("eigendecomposition of covariate covariance failed");
    }
    const Eigen::VectorXd evals = eig.eigenvalues();
    const double lambda_min = evals.minCoeff();
    const double lambda_max = evals.maxCoeff();
    const double rcond = lambda_max > 0.0 ? lambda_min / lambda_max : 0.0;
    if (lambda_min <= 0.0 || rcond < kRcondFloor) {
        // Name the covariate carrying the degenerate direction.
        Eigen::Index weak = 0;
        eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&weak);
        throw NumericalError(
            "covariate covariance is singular or near-singular (rcond=" +
            std::to_string(rcond) + "); the degenerate direction loads mostly on "
            "covariate column " + std::to_string(weak) +
            " - drop collinear or constant columns and rebuild");
    }

    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("Cholesky factorization of covariate covariance failed");
    }
    Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));

    DesignContext ctx{std::move(covariates), n1,       n0, s2, std::move(sigma_inv),
                      0.0,                   p_accept};
    ctx.threshold_a = chi2_quantile(p_accept, d);
    return ctx;
}

namespace detail {

/// Mahalanobis distance of the weighted mean difference, with explicit
/// treatment and control weight vectors. Keeping both sides explicit makes
/// the computation bitwise symmetric under swapping the two groups, which
/// the Langevin sampler's sign-symmetry relies on.
inline double mahalanobis_weights(const DesignContext& ctx, const Eigen::VectorXd& wt,
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
    return delta.dot(ctx.sigma_inv * delta);
}

}  // namespace detail

/// Mahalanobis balance metric M = Delta' Sigma^{-1} Delta for a hard (binary)
/// or soft (in (0,1)) assignment vector w. Group sizes come from the weights;
/// Sigma^{-1} is the context's precomputed hard-assignment inverse and is not
/// recomputed from soft weights.
inline double mahalanobis(const DesignContext& ctx, const Eigen::VectorXd& w) {
    if (w.size() != ctx.n()) {
        throw InputError("assignment length " + std::to_string(w.size()) +
                         " does not match context n=" + std::to_string(ctx.n()));
    }
    return detail::mahalanobis_weights(ctx, w, Eigen::VectorXd::Ones(w.size()) - w);
}

inline double mahalanobis(const DesignContext& ctx, const Assignment& a) {
    return mahalanobis(ctx, a.as_doubles());
}

}  // namespace rerand

#endif  // RERAND_BALANCE_HPP
