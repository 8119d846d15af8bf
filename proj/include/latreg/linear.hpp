#pragma once

#include "latreg/data.hpp"
#include "latreg/moments.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace latreg {

enum class LinearEstimatorId {
    classical,
    shrinkage,
    weighted_classical,
    weighted_shrinkage,
    two_sided,
    loo_iv,
    debiased_moment,
    naive_ols,
};

std::string to_string(LinearEstimatorId id);
LinearEstimatorId linear_estimator_from_string(const std::string& name);

/// Gaussian prior for the latent attribute: mu ~ N(mu, sigma_mu2).
/// sigma_mu2 is floored at the variance floor; `floored` records when the
/// raw moment estimate fell below it.
struct GaussianPrior {
    double mu = 0;
    double sigma_mu2 = 0;
    bool floored = false;
};

struct LinearEstimate {
    LinearEstimatorId id = LinearEstimatorId::classical;
    double beta = 0;
    double intercept = 0;
    std::optional<Eigen::VectorXd> covariate_coefs;
    // classical-family extras: the uncorrected slope and the attenuation
    // inflation factor from the identification argument.
    std::optional<double> naive_slope;
    std::optional<double> inflation_factor;
    std::optional<GaussianPrior> prior; // shrinkage-family meta
    bool weighted = false;
};

/// All estimator denominators (and the prior variance) are guarded at
/// 1e-12 * var_n(X). Below it, shrinkage flags flooring and point estimators
/// throw EstimatorError rather than return silent garbage.
inline double variance_floor(double var_x) { return 1e-12 * var_x; }

/// Classical errors-in-variables slope:
/// beta = cov_n(Y,X) / (var_n(X) - E_n[sigma^2]), intercept by the mean
/// equation. Also reports the naive OLS slope and the inflation factor
/// var_n(X) / (var_n(X) - E_n[sigma^2]).
LinearEstimate classical_eiv(const MomentSummary& m);

/// Uncorrected OLS slope of Y on X (baseline, the "FE" column).
LinearEstimate naive_ols(const MomentSummary& m);

/// Which moments feed the Gaussian prior. x_moments (default) makes the
/// homoskedastic identity "regress-on-shrinkage = classical" hold exactly;
/// y_moments reproduces the literal textbook display some applied work uses.
enum class PriorMomentSource { x_moments, y_moments };

GaussianPrior fit_gaussian_prior(const MomentSummary& m,
                                 PriorMomentSource source = PriorMomentSource::x_moments);

/// Posterior-mean parameters of mu | X = x under a Gaussian prior and
/// N(mu, sigma2) noise. Shared by linear_shrinkage and the Gaussian
/// posterior-mean transform so the two agree exactly.
struct GaussianPosterior {
    double mean;
    double var;
};
inline GaussianPosterior gaussian_posterior(const GaussianPrior& prior, double x,
                                            double sigma2) {
    const double total = sigma2 + prior.sigma_mu2;
    const double w_prior = sigma2 / total;
    const double w_data = prior.sigma_mu2 / total;
    return {w_prior * prior.mu + w_data * x, prior.sigma_mu2 * sigma2 / total};
}

/// Per-unit parametric EB posterior means
/// sigma_i^2/(sigma_i^2+s2) * mu + s2/(sigma_i^2+s2) * X_i.
std::vector<double> linear_shrinkage(const ObservationSet& data, const GaussianPrior& prior);

/// OLS of Y on the shrunk regressor (the regress-on-shrinkage estimator).
LinearEstimate regress_on_shrinkage(const ObservationSet& data,
                                    std::span<const double> posterior_means);

/// Weighted least squares of Y on the shrunk regressor with the data's
/// weights (the weighted shrinkage estimator).
LinearEstimate weighted_regress_on_shrinkage(const ObservationSet& data,
                                             std::span<const double> posterior_means,
                                             std::span<const double> weights);

/// Weighted classical estimator:
/// (sum W Y X - sum W X sum W Y) / (sum W X^2 - (sum W X)^2 - sum W sigma^2).
LinearEstimate weighted_classical_eiv(const ObservationSet& data,
                                      std::span<const double> weights);

/// Two-sided correction: additionally subtracts sum_i W_i cov12_i from the
/// weighted covariance numerator (measurement error on both sides with
/// within-unit noise covariance cov12_i). Bit-identical to
/// weighted_classical_eiv when cov12 is all zero.
LinearEstimate two_sided_corrected(const ObservationSet& data,
                                   std::span<const double> weights,
                                   std::span<const double> cov12);

/// Per-teacher estimate of the (Y, X) noise covariance for the two-sided
/// correction: within-group sample covariance (divisor N_i - 1) divided
/// by N_i.
std::vector<double> estimate_cov12(const GroupedData& grouped);

/// Student-level 2SLS of Y_ij on [1, X_ij, Z_ij] instrumenting X_ij with the
/// within-teacher leave-one-out mean X_{i,-j}.
LinearEstimate loo_iv(const GroupedData& grouped);

/// Student-level normal equations with the infeasible mu-moments replaced by
/// group-debiased counterparts (group mean times column sums minus the
/// within-group empirical covariance term). Numerically equivalent to loo_iv;
/// computed through an independent arithmetic route.
LinearEstimate debiased_moment(const GroupedData& grouped);

} // namespace latreg
