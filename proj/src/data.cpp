#include "latreg/data.hpp"

#include "latreg/errors.hpp"

#include <cmath>
#include <string>

namespace latreg {

namespace {

void require_finite(const std::vector<double>& v, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw DataError(std::string("non-finite ") + name + " at row " +
                            std::to_string(i + 1));
        }
    }
}

} // namespace

ObservationSet ObservationSet::make(std::vector<double> y, std::vector<double> x,
                                    std::vector<double> sigma,
                                    std::vector<double> weight,
                                    std::optional<Eigen::MatrixXd> covariates) {
    const std::size_t n = y.size();
    if (n < 3) {
        throw DataError("need at least 3 observations, got " + std::to_string(n));
    }
    if (x.size() != n || sigma.size() != n) {
        throw DataError("column length mismatch: y=" + std::to_string(n) +
                        " x=" + std::to_string(x.size()) +
                        " sigma=" + std::to_string(sigma.size()));
    }
    require_finite(y, "y");
    require_finite(x, "x");
    require_finite(sigma, "sigma");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(sigma[i] > 0)) {
            throw DataError("sigma must be strictly positive; sigma=" +
                            std::to_string(sigma[i]) + " at row " + std::to_string(i + 1));
        }
    }

    ObservationSet out;
    out.unit_weights_ = weight.empty();
    if (weight.empty()) {
        weight.assign(n, 1.0);
    } else {
        if (weight.size() != n) {
            throw DataError("weight column length mismatch");
        }
        require_finite(weight, "weight");
        std::size_t positive = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (weight[i] < 0) {
                throw DataError("negative weight at row " + std::to_string(i + 1));
            }
            if (weight[i] > 0) ++positive;
        }
        if (positive < 2) {
            throw DataError("need at least two strictly positive weights");
        }
    }
    if (covariates) {
        if (static_cast<std::size_t>(covariates->rows()) != n) {
            throw DataError("covariate row count mismatch");
        }
        if (!covariates->allFinite()) {
            throw DataError("non-finite covariate value");
        }
    }
    out.y_ = std::move(y);
    out.x_ = std::move(x);
    out.sigma_ = std::move(sigma);
    out.weight_ = std::move(weight);
    out.covariates_ = std::move(covariates);
    return out;
}

GroupedData GroupedData::make(std::vector<Group> groups) {
    if (groups.empty()) {
        throw DataError("no groups");
    }
    GroupedData out;
    std::size_t cov_cols = 0;
    bool cov_seen = false;
    for (const auto& g : groups) {
        const std::size_t ni = g.y.size();
        if (ni < 2) {
            throw DataError("group '" + g.id + "' has size " + std::to_string(ni) +
                            "; the leave-one-out instrument needs at least 2 members");
        }
        if (g.x.size() != ni) {
            throw DataError("group '" + g.id + "': x/y length mismatch");
        }
        require_finite(g.y, ("y in group '" + g.id + "'").c_str());
        require_finite(g.x, ("x in group '" + g.id + "'").c_str());
        if (g.z) {
            if (static_cast<std::size_t>(g.z->rows()) != ni) {
                throw DataError("group '" + g.id + "': covariate row mismatch");
            }
            if (!g.z->allFinite()) {
                throw DataError("group '" + g.id + "': non-finite covariate");
            }
            if (cov_seen && cov_cols != static_cast<std::size_t>(g.z->cols())) {
                throw DataError("inconsistent covariate column counts across groups");
            }
            cov_cols = static_cast<std::size_t>(g.z->cols());
            cov_seen = true;
        } else if (cov_seen) {
            throw DataError("group '" + g.id + "' lacks covariates present elsewhere");
        }
        out.n_students_ += ni;
    }
    out.n_covariates_ = cov_seen ? cov_cols : 0;
    out.groups_ = std::move(groups);
    return out;
}

ObservationSet aggregate(const GroupedData& grouped) {
    const std::size_t g = grouped.n_groups();
    std::vector<double> y(g), x(g), sigma(g), weight(g);
    std::optional<Eigen::MatrixXd> z;
    if (grouped.has_covariates()) {
        z = Eigen::MatrixXd(g, grouped.n_covariates());
    }
    for (std::size_t i = 0; i < g; ++i) {
        const Group& grp = grouped.groups()[i];
        const double ni = static_cast<double>(grp.y.size());
        double ybar = 0, xbar = 0;
        for (double v : grp.y) ybar += v;
        for (double v : grp.x) xbar += v;
        ybar /= ni;
        xbar /= ni;
        double ssx = 0;
        for (double v : grp.x) ssx += (v - xbar) * (v - xbar);
        const double s2 = ssx / (ni - 1.0); // within-group sample variance
        if (!(s2 > 0)) {
            throw DataError("group '" + grp.id +
                            "' has zero within-group x-dispersion; implied sigma is 0");
        }
        y[i] = ybar;
        x[i] = xbar;
        sigma[i] = std::sqrt(s2 / ni);
        weight[i] = ni;
        if (z) {
            z->row(i) = grp.z->colwise().mean();
        }
    }
    return ObservationSet::make(std::move(y), std::move(x), std::move(sigma),
                                std::move(weight), std::move(z));
}

} // namespace latreg
