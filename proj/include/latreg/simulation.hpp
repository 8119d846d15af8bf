#pragma once

#include "latreg/data.hpp"
#include "latreg/linear.hpp"
#include "latreg/priors.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace latreg {

/// Piecewise-linear function through sorted knots, constant beyond the ends.
class PiecewiseLinear {
  public:
    PiecewiseLinear() = default;
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys);
    double operator()(double x) const;
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ys() const { return ys_; }
    bool empty() const { return xs_.empty(); }

  private:
    std::vector<double> xs_, ys_;
};

/// Local linear regression with an Epanechnikov kernel, evaluated on an
/// equispaced grid over [min x, max x] and returned as a piecewise-linear
/// function. bandwidth <= 0 selects the rule of thumb 1.06 sd(x) n^{-1/5}.
/// Windows too empty or degenerate for a local line fall back to a widened
/// window / local constant, so the fit is defined on the whole grid.
PiecewiseLinear local_linear_fit(std::span<const double> x, std::span<const double> y,
                                 double bandwidth = 0, int grid_points = 101);

struct LinearDgp {
    double beta_mu = 0;
    double beta_sigma = 0;
    double noise_sd = 1;
};

struct NonlinearDgp {
    double effect = 1;     // normalized effect: sd(1(mu > mu0)) * tau0
    double quantile = 0.75; // mu0 = this quantile of the marginal prior G
    double noise_sd = 1;
};

struct LogNormalSigma {
    double mu_log = 0; // parameters of log sigma
    double sd_log = 1;
};

// A fully serialized simulation design: the sigma source (empirical sample
// or parametric log-normal), the conditional mean/variance of mu given
// sigma, the outcome equation, and the seed. All "true" population
// quantities are computed from the spec itself, never from a simulated
// sample: exact finite sums over an empirical sigma sample, 128-node
// Gauss-Hermite quadrature over a log-normal one.
class DgpSpec {
  public:
    std::variant<LinearDgp, NonlinearDgp> mode;
    std::vector<double> sigma_sample;               // empirical source...
    std::optional<LogNormalSigma> sigma_lognormal;  // ...or parametric
    PiecewiseLinear cond_mean; // m(sigma)
    PiecewiseLinear cond_var;  // s^2(sigma), >= 0 on the sigma support
    std::size_t n = 10058;
    std::uint64_t seed = 0;
    double clamp_fraction = 0; // share of calibration grid clamped at 0

    bool is_linear() const { return std::holds_alternative<LinearDgp>(mode); }

    /// Validates invariants (a sigma source present, cond_var >= 0 on the
    /// support, noise sd > 0, quantile in (0,1)); throws DataError with a
    /// JSON-pointer-style path.
    void validate() const;

    // Population moments implied by the spec.
    double mu_mean() const;
    double mu_var() const;
    double log10sigma_mean() const;
    double log10sigma_var() const;
    double cov_mu_log10sigma() const;

    /// Linear mode: beta0 = beta_mu + beta_sigma cov(mu, log10 sigma)/var(mu).
    double true_beta0() const;

    /// Nonlinear mode: the marginal prior G = N(m, s^2) pooling the
    /// conditional spec over the sigma distribution.
    GaussianPrior marginal_prior() const;

    nlohmann::json to_json() const;
    static DgpSpec from_json(const nlohmann::json& j);
};

/// Estimates a linear-mode DgpSpec from data: m from a local linear fit of X
/// on sigma, s^2 from a local linear fit of the squared residual on sigma
/// minus sigma^2 (clamped at 0; clamping more than half the grid throws
/// "calibration infeasible"). The sigma sample is stored empirically.
/// Outcome coefficients are left unset.
DgpSpec calibrate_dgp(const ObservationSet& data);

struct SimulatedLinear {
    ObservationSet data;
    LatentTruth truth;
    double beta0 = 0;
};

struct SimulatedNonlinear {
    ObservationSet data;
    LatentTruth truth;
    double tau0 = 0;
    double mu0 = 0;
    GaussianPrior prior; // the true G
};

/// sigma resampled from the spec's source, mu | sigma ~ N(m(sigma),
/// s^2(sigma)), X | mu, sigma ~ N(mu, sigma^2),
/// Y = beta_mu mu + beta_sigma log10 sigma + noise. Uses RNG stream
/// (seed, stream).
SimulatedLinear simulate_linear(const DgpSpec& spec, std::size_t n, std::uint64_t seed,
                                std::uint64_t stream = 0);

/// mu ~ G = N(m, s^2) independent of sigma, Y = tau0 1(mu > mu0) + noise with
/// mu0 at the requested quantile of G and tau0 = effect / sd(1(mu > mu0)).
SimulatedNonlinear simulate_nonlinear(const DgpSpec& spec, std::size_t n,
                                      std::uint64_t seed, std::uint64_t stream = 0);

struct LinearMcEstimator {
    std::string name;
    std::function<double(const SimulatedLinear&)> fn;
};

struct NonlinearMcEstimator {
    std::string name;
    std::function<double(const SimulatedNonlinear&)> fn;
};

/// The named estimators of the linear comparison: "classical", "shrinkage",
/// "naive_ols".
std::vector<LinearMcEstimator> standard_linear_mc_estimators(const std::vector<std::string>& names);

/// "oracle", "npeb", "plugin" for the given threshold transform; npeb uses
/// the supplied NPMLE configuration.
std::vector<NonlinearMcEstimator>
standard_nonlinear_mc_estimators(const std::vector<std::string>& names,
                                 const NpmleConfig& npmle = {});

struct McEstimatorCell {
    std::string name;
    std::size_t reps_used = 0;
    std::size_t failures = 0;
    double mean = 0;
    double bias = 0;
    double variance = 0;
    double mse = 0;
    std::vector<double> draws; // successful draws, replication order
};

struct McCell {
    std::vector<double> coords;
    double true_param = 0;
    std::vector<McEstimatorCell> estimators;
    bool flagged = false; // > 10% of replications failed
};

struct McSummary {
    std::vector<std::string> coord_names;
    std::vector<McCell> cells;

    /// Long-format CSV: coord columns, estimator, statistic, value.
    void write_summary_csv(const std::string& path) const;
    /// Per-replication estimates: coord columns, rep, estimator, estimate.
    void write_density_csv(const std::string& path) const;
};

// Runs the grid: cell c, replication r simulates on RNG stream
// (seed, c * 2^32 + r) and evaluates every estimator. A replication where
// any estimator fails is excluded for all of them (counts stay comparable);
// failures are tallied per estimator. Cell coordinates are the scaled
// coefficients (linear) or (tau0, quantile) (nonlinear), and the true
// parameter comes from the spec's population formulas. Deterministic for any
// thread count.
McSummary run_monte_carlo_linear(const std::vector<DgpSpec>& cells,
                                 const std::vector<LinearMcEstimator>& estimators,
                                 int reps, std::uint64_t seed, int threads = 1);

McSummary run_monte_carlo_nonlinear(const std::vector<DgpSpec>& cells,
                                    const std::vector<NonlinearMcEstimator>& estimators,
                                    int reps, std::uint64_t seed, int threads = 1);

/// The default linear comparison lattice: scaled beta_mu in {-.3,...,.3}
/// (11 points) x scaled beta_sigma in {0,...,.3} (7 points), where scaling
/// divides by the spec-implied sd of mu and of log10 sigma.
std::vector<DgpSpec> default_linear_grid(const DgpSpec& base);

/// A single-cell grid with the given scaled coefficients.
DgpSpec with_scaled_coefficients(const DgpSpec& base, double scaled_beta_mu,
                                 double scaled_beta_sigma);

} // namespace latreg
