#pragma once

#include "latreg/data.hpp"
#include "latreg/priors.hpp"

#include <string>
#include <variant>

namespace latreg {

enum class TauEstimatorId { oracle, npeb, plugin };

std::string to_string(TauEstimatorId id);

using PriorRef = std::variant<GaussianPrior, DiscretePrior>;

struct TauEstimate {
    TauEstimatorId id = TauEstimatorId::oracle;
    double tau = 0;
    double rho = 0; // intercept
    double regressor_variance = 0;
    std::string prior_used;
};

/// OLS of Y on the posterior mean E[f(mu) | X_i, sigma_i] under the supplied
/// prior. With the true prior this is the consistent estimator of the
/// projection coefficient on f(mu).
TauEstimate oracle_tau(const ObservationSet& data, const PriorRef& prior,
                       const Transform& f);

/// Fits the NPMLE prior on (X, sigma) and regresses Y on the fitted
/// posterior means of f(mu).
TauEstimate npeb_tau(const ObservationSet& data, const Transform& f,
                     const NpmleConfig& config = {});

/// Regresses Y on f evaluated at the posterior mean of mu (the common
/// plug-in practice). Inconsistent for nonlinear f in general; exposed for
/// the bias comparison.
TauEstimate plugin_tau(const ObservationSet& data, const PriorRef& prior,
                       const Transform& f);

} // namespace latreg
