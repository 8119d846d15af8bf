#pragma once

#include "latreg/data.hpp"
#include "latreg/linear.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace latreg {

/// Discrete prior on a fixed grid of atoms: the NPMLE representation.
class DiscretePrior {
  public:
    DiscretePrior() = default; // empty; populate through make()

    /// support strictly increasing and finite; masses >= 0 summing to 1
    /// within 1e-10. Throws DataError otherwise.
    static DiscretePrior make(std::vector<double> support, std::vector<double> mass);

    const std::vector<double>& support() const { return support_; }
    const std::vector<double>& mass() const { return mass_; }
    std::size_t size() const { return support_.size(); }
    double mean() const;
    double variance() const;

  private:
    std::vector<double> support_, mass_;
};

/// Two-column CSV (support, mass) persistence for reuse across CLI runs.
void save_prior_csv(const std::string& path, const DiscretePrior& prior);
DiscretePrior load_prior_csv(const std::string& path);

/// A known transform f of the latent attribute. indicator_above uses the
/// strict inequality 1(mu > threshold). user_table is piecewise linear
/// through the given knots with constant extrapolation beyond them.
class Transform {
  public:
    enum class Kind { identity, indicator_above, user_table };

    static Transform identity();
    static Transform indicator_above(double threshold);
    static Transform user_table(std::vector<double> xs, std::vector<double> fs,
                                double bound);

    Kind kind() const { return kind_; }
    double threshold() const { return threshold_; }
    double bound() const { return bound_; }
    double operator()(double u) const;

  private:
    Transform() = default;
    Kind kind_ = Kind::identity;
    double threshold_ = 0;
    double bound_ = 0;
    std::vector<double> xs_, fs_;
};

struct NpmleConfig {
    int grid_size = 300;
    double tol = 1e-8; // relative log-likelihood gain
    int max_iter = 2000;
    // Atom range; defaults to [min X - 0.5 max sigma, max X + 0.5 max sigma].
    std::optional<std::pair<double, double>> range;
};

struct NpmleResult {
    DiscretePrior prior;
    double log_likelihood = 0;
    int iterations = 0;
    std::vector<double> loglik_history; // one entry per EM iteration
};

/// Kiefer-Wolfowitz NPMLE of the prior under heteroskedastic Gaussian noise,
/// by EM (multiplicative-gradient) ascent on a fixed equispaced grid with
/// uniform initialization. The mixture log-likelihood is non-decreasing every
/// iteration; iteration stops when the relative gain drops below tol or at
/// max_iter. Likelihood rows are evaluated with per-row max subtraction
/// (log-sum-exp) so small sigma_i cannot underflow the mixture.
NpmleResult fit_npmle(const ObservationSet& data, const NpmleConfig& config = {});

/// E[f(mu) | X = x, sigma] under a Gaussian prior: identity in closed form
/// (exactly the linear shrinkage value), indicator via the Gaussian tail,
/// user_table via 64-node Gauss-Hermite quadrature.
double posterior_mean_gaussian(const GaussianPrior& prior, const Transform& f,
                               double x, double sigma);

/// E_G[f(mu) | X = x, sigma] under a discrete prior: the atom-weighted ratio
/// sum_k f(s_k) m_k phi((x-s_k)/sigma) / sum_k m_k phi((x-s_k)/sigma),
/// evaluated in log space. Throws EstimatorError when every atom underflows.
double posterior_mean_discrete(const DiscretePrior& prior, const Transform& f,
                               double x, double sigma);

} // namespace latreg
