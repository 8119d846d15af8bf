#pragma once

#include "latreg/data.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace latreg {

struct BootstrapResult {
    double point = 0;
    std::vector<double> draws; // successful draws in draw-index order
    double se = 0;             // sample sd of draws
    double ci_lo = 0, ci_hi = 0;               // percentile interval
    double normal_ci_lo = 0, normal_ci_hi = 0; // point +/- z * se
    double level = 0.95;
    int requested = 0;
    int failed_draws = 0;
    std::uint64_t seed = 0;
};

using ScalarEstimator = std::function<double(const ObservationSet&)>;
using GroupedScalarEstimator = std::function<double(const GroupedData&)>;

/// Nonparametric bootstrap: iid unit-level resampling, B draws, draw r on
/// RNG stream (seed, r). Draws where the estimator throws EstimatorError or
/// DataError are counted in failed_draws and excluded; more than B/2 failures
/// raises BootstrapError("bootstrap unstable ..."). Deterministic given
/// (data, estimator, B, seed, level) regardless of thread count.
BootstrapResult bootstrap(const ObservationSet& data, const ScalarEstimator& estimator,
                          int B, std::uint64_t seed, double level = 0.95,
                          int threads = 1);

/// Grouped variant: whole teachers are resampled, never individual students.
BootstrapResult bootstrap(const GroupedData& data, const GroupedScalarEstimator& estimator,
                          int B, std::uint64_t seed, double level = 0.95,
                          int threads = 1);

enum class DiagnosticId { y_on_log_sigma, x_on_log_sigma, condvar_constancy };

std::string to_string(DiagnosticId id);

struct DiagnosticReport {
    DiagnosticId id = DiagnosticId::y_on_log_sigma;
    double coef = 0;   // OLS slope, or the max-minus-min range for condvar
    double se = 0;     // bootstrap standard error
    double t_stat = 0;
    bool flagged = false; // descriptive call at the 5% nominal level
};

struct DiagnosticConfig {
    int bootstrap_B = 999;
    std::uint64_t seed = 0;
    int grid_points = 25; // condvar evaluation grid over [min sigma, max sigma]
    int threads = 1;
};

/// Precision-independence battery: OLS of Y and of X on log10 sigma with
/// bootstrap SEs, plus constancy of the implied conditional latent variance
/// var(X|sigma) - sigma^2 fitted by local linear regression (coef = range of
/// the fit over the evaluation grid, relative to its bootstrap band; the
/// condvar verdict is descriptive since a range statistic has no standard
/// null). Throws EstimatorError when sigma has no dispersion.
std::vector<DiagnosticReport> diagnose_precision(const ObservationSet& data,
                                                 const DiagnosticConfig& config = {});

} // namespace latreg
