#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace latreg {

// Aggregated unit-level records: outcome Y_i, noisy measurement X_i of the
// latent attribute, its known standard error sigma_i, optional weights and
// controls. Immutable after construction; safe to share across threads.
class ObservationSet {
  public:
    /// Validates and constructs. Throws DataError (with the offending row
    /// index) on: n < 3, length mismatch, non-finite value, sigma <= 0,
    /// negative weight, or fewer than two strictly positive weights.
    /// An empty weight vector means unit weights.
    static ObservationSet make(std::vector<double> y, std::vector<double> x,
                               std::vector<double> sigma,
                               std::vector<double> weight = {},
                               std::optional<Eigen::MatrixXd> covariates = std::nullopt);

    std::size_t size() const { return y_.size(); }
    const std::vector<double>& y() const { return y_; }
    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& sigma() const { return sigma_; }
    const std::vector<double>& weight() const { return weight_; }
    bool unit_weights() const { return unit_weights_; }
    bool has_covariates() const { return covariates_.has_value(); }
    const Eigen::MatrixXd& covariates() const { return *covariates_; }

  private:
    ObservationSet() = default;
    std::vector<double> y_, x_, sigma_, weight_;
    std::optional<Eigen::MatrixXd> covariates_;
    bool unit_weights_ = true;
};

/// Student-level records nested in teachers. Every group must have at least
/// two members (the leave-one-out instrument needs a peer).
struct Group {
    std::string id;
    std::vector<double> y;
    std::vector<double> x;
    std::optional<Eigen::MatrixXd> z; // N_i rows, shared column count
};

class GroupedData {
  public:
    /// Throws DataError naming the group on: size < 2, length mismatch,
    /// non-finite value, or inconsistent covariate column counts.
    static GroupedData make(std::vector<Group> groups);

    const std::vector<Group>& groups() const { return groups_; }
    std::size_t n_groups() const { return groups_.size(); }
    std::size_t n_students() const { return n_students_; }
    bool has_covariates() const { return n_covariates_ > 0; }
    std::size_t n_covariates() const { return n_covariates_; }

  private:
    GroupedData() = default;
    std::vector<Group> groups_;
    std::size_t n_students_ = 0;
    std::size_t n_covariates_ = 0;
};

/// The latent attribute itself; only available in simulated data.
struct LatentTruth {
    std::vector<double> mu;
};

/// Collapses students to the teacher level: Y_i = mean of y_ij, X_i = mean of
/// x_ij, sigma_i^2 = within-group sample variance of x (divisor N_i - 1)
/// divided by N_i, weight = N_i. Covariates, when present, are carried over
/// as within-group means. A group with zero x-dispersion would imply
/// sigma_i = 0 and is reported as an error.
ObservationSet aggregate(const GroupedData& grouped);

} // namespace latreg
