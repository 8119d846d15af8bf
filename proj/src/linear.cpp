#include "latreg/linear.hpp"

#include "latreg/errors.hpp"

#include <cmath>
#include <cstdio>
#include <map>

namespace latreg {

std::string to_string(LinearEstimatorId id) {
    switch (id) {
        case LinearEstimatorId::classical: return "classical";
        case LinearEstimatorId::shrinkage: return "shrinkage";
        case LinearEstimatorId::weighted_classical: return "weighted_classical";
        case LinearEstimatorId::weighted_shrinkage: return "weighted_shrinkage";
        case LinearEstimatorId::two_sided: return "two_sided";
        case LinearEstimatorId::loo_iv: return "loo_iv";
        case LinearEstimatorId::debiased_moment: return "debiased_moment";
        case LinearEstimatorId::naive_ols: return "naive_ols";
    }
    return "?";
}

LinearEstimatorId linear_estimator_from_string(const std::string& name) {
    static const std::map<std::string, LinearEstimatorId> table = {
        {"classical", LinearEstimatorId::classical},
        {"shrinkage", LinearEstimatorId::shrinkage},
        {"weighted_classical", LinearEstimatorId::weighted_classical},
        {"weighted_shrinkage", LinearEstimatorId::weighted_shrinkage},
        {"two_sided", LinearEstimatorId::two_sided},
        {"loo_iv", LinearEstimatorId::loo_iv},
        {"debiased_moment", LinearEstimatorId::debiased_moment},
        {"naive_ols", LinearEstimatorId::naive_ols},
    };
    auto it = table.find(name);
    if (it == table.end()) {
        throw DataError("unknown estimator '" + name + "'");
    }
    return it->second;
}

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Shared classical-family core. cov_correction is the two-sided term
// (exactly 0.0 for the one-sided estimators, which keeps the reduction
// bit-identical).
LinearEstimate eiv_core(const MomentSummary& m, double cov_correction,
                        LinearEstimatorId id) {
    const double denom = m.var_x - m.mean_sigma2;
    if (!(denom > variance_floor(m.var_x))) {
        throw EstimatorError("signal variance not identified in sample: var_n(X) - "
                             "E_n[sigma^2] = " +
                             fmt(denom));
    }
    LinearEstimate e;
    e.id = id;
    e.weighted = m.weighted;
    e.beta = (m.cov_xy - cov_correction) / denom;
    e.intercept = m.mean_y - e.beta * m.mean_x;
    if (m.var_x > 0) {
        e.naive_slope = m.cov_xy / m.var_x;
        e.inflation_factor = m.var_x / denom;
    }
    return e;
}

LinearEstimate slope_core(const MomentSummary& data_m, double mean_r, double var_r,
                          double cov_yr, double mean_y, LinearEstimatorId id) {
    if (!(var_r > variance_floor(data_m.var_x)) || !(var_r > 0)) {
        throw EstimatorError("degenerate regressor: var_n = " + fmt(var_r));
    }
    LinearEstimate e;
    e.id = id;
    e.weighted = data_m.weighted;
    e.beta = cov_yr / var_r;
    e.intercept = mean_y - e.beta * mean_r;
    return e;
}

} // namespace

LinearEstimate classical_eiv(const MomentSummary& m) {
    return eiv_core(m, 0.0,
                    m.weighted ? LinearEstimatorId::weighted_classical
                               : LinearEstimatorId::classical);
}

LinearEstimate naive_ols(const MomentSummary& m) {
    if (!(m.var_x > 0)) {
        throw EstimatorError("degenerate regressor: var_n(X) = " + fmt(m.var_x));
    }
    LinearEstimate e;
    e.id = LinearEstimatorId::naive_ols;
    e.weighted = m.weighted;
    e.beta = m.cov_xy / m.var_x;
    e.intercept = m.mean_y - e.beta * m.mean_x;
    return e;
}

GaussianPrior fit_gaussian_prior(const MomentSummary& m, PriorMomentSource source) {
    GaussianPrior prior;
    const bool use_x = source == PriorMomentSource::x_moments;
    prior.mu = use_x ? m.mean_x : m.mean_y;
    const double raw = (use_x ? m.var_x : m.var_y) - m.mean_sigma2;
    const double floor = variance_floor(m.var_x);
    if (raw < floor) {
        prior.sigma_mu2 = floor;
        prior.floored = true;
    } else {
        prior.sigma_mu2 = raw;
    }
    return prior;
}

std::vector<double> linear_shrinkage(const ObservationSet& data, const GaussianPrior& prior) {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double s2 = data.sigma()[i] * data.sigma()[i];
        out[i] = gaussian_posterior(prior, data.x()[i], s2).mean;
    }
    return out;
}

namespace {

LinearEstimate shrinkage_regression(const ObservationSet& data,
                                    std::span<const double> pm,
                                    std::span<const double> w, bool weighted,
                                    LinearEstimatorId id) {
    if (pm.size() != data.size()) {
        throw DataError("posterior mean vector length mismatch");
    }
    const MomentSummary data_m =
        weighted ? weighted_moments(data, w) : sample_moments(data);
    double sw = 0, sr = 0, sy = 0;
    for (std::size_t i = 0; i < pm.size(); ++i) {
        const double wi = weighted ? w[i] : 1.0;
        sw += wi;
        sr += wi * pm[i];
        sy += wi * data.y()[i];
    }
    const double mr = sr / sw;
    const double my = sy / sw;
    double vr = 0, cyr = 0;
    for (std::size_t i = 0; i < pm.size(); ++i) {
        const double wi = weighted ? w[i] : 1.0;
        const double dr = pm[i] - mr;
        vr += wi * dr * dr;
        cyr += wi * dr * (data.y()[i] - my);
    }
    return slope_core(data_m, mr, vr / sw, cyr / sw, my, id);
}

} // namespace

LinearEstimate regress_on_shrinkage(const ObservationSet& data,
                                    std::span<const double> posterior_means) {
    return shrinkage_regression(data, posterior_means, {}, false,
                                LinearEstimatorId::shrinkage);
}

LinearEstimate weighted_regress_on_shrinkage(const ObservationSet& data,
                                             std::span<const double> posterior_means,
                                             std::span<const double> weights) {
    return shrinkage_regression(data, posterior_means, weights, true,
                                LinearEstimatorId::weighted_shrinkage);
}

LinearEstimate weighted_classical_eiv(const ObservationSet& data,
                                      std::span<const double> weights) {
    const MomentSummary m = weighted_moments(data, weights);
    return eiv_core(m, 0.0, LinearEstimatorId::weighted_classical);
}

LinearEstimate two_sided_corrected(const ObservationSet& data,
                                   std::span<const double> weights,
                                   std::span<const double> cov12) {
    if (cov12.size() != data.size()) {
        throw DataError("cov12 vector length mismatch");
    }
    for (std::size_t i = 0; i < cov12.size(); ++i) {
        if (!std::isfinite(cov12[i])) {
            throw DataError("non-finite cov12 at row " + std::to_string(i + 1));
        }
    }
    const MomentSummary m = weighted_moments(data, weights);
    double sw = 0;
    for (double w : weights) sw += w;
    double correction = 0;
    for (std::size_t i = 0; i < cov12.size(); ++i) {
        correction += weights[i] * cov12[i];
    }
    correction /= sw;
    return eiv_core(m, correction, LinearEstimatorId::two_sided);
}

std::vector<double> estimate_cov12(const GroupedData& grouped) {
    std::vector<double> out(grouped.n_groups());
    for (std::size_t i = 0; i < grouped.n_groups(); ++i) {
        const Group& g = grouped.groups()[i];
        const double ni = static_cast<double>(g.y.size());
        double ybar = 0, xbar = 0;
        for (double v : g.y) ybar += v;
        for (double v : g.x) xbar += v;
        ybar /= ni;
        xbar /= ni;
        double cross = 0;
        for (std::size_t j = 0; j < g.y.size(); ++j) {
            cross += (g.y[j] - ybar) * (g.x[j] - xbar);
        }
        out[i] = cross / (ni - 1.0) / ni;
    }
    return out;
}

namespace {

LinearEstimate solve_student_system(const Eigen::MatrixXd& lhs, const Eigen::VectorXd& rhs,
                                    LinearEstimatorId id) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
        throw EstimatorError(
            "singular student-level moment system (zero first stage or collinear "
            "covariates)");
    }
    const Eigen::VectorXd theta = lu.solve(rhs);
    LinearEstimate e;
    e.id = id;
    e.intercept = theta(0);
    e.beta = theta(1);
    if (theta.size() > 2) {
        e.covariate_coefs = theta.tail(theta.size() - 2);
    }
    return e;
}

} // namespace

LinearEstimate loo_iv(const GroupedData& grouped) {
    const std::size_t n = grouped.n_students();
    const std::size_t q = grouped.n_covariates();
    const Eigen::Index k = static_cast<Eigen::Index>(2 + q);
    Eigen::MatrixXd vw = Eigen::MatrixXd::Zero(k, k); // instruments' cross moments
    Eigen::VectorXd vy = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd w(k), v(k);
    for (const Group& g : grouped.groups()) {
        const std::size_t ni = g.y.size();
        double xsum = 0;
        for (double x : g.x) xsum += x;
        for (std::size_t j = 0; j < ni; ++j) {
            const double xloo = (xsum - g.x[j]) / static_cast<double>(ni - 1);
            w(0) = 1.0;
            w(1) = g.x[j];
            v(0) = 1.0;
            v(1) = xloo;
            for (std::size_t c = 0; c < q; ++c) {
                const double zc = (*g.z)(static_cast<Eigen::Index>(j),
                                         static_cast<Eigen::Index>(c));
                w(2 + static_cast<Eigen::Index>(c)) = zc;
                v(2 + static_cast<Eigen::Index>(c)) = zc;
            }
            vw.noalias() += v * w.transpose();
            vy.noalias() += v * g.y[j];
        }
    }
    (void)n;
    return solve_student_system(vw, vy, LinearEstimatorId::loo_iv);
}

LinearEstimate debiased_moment(const GroupedData& grouped) {
    // Normal equations for theta = (alpha, beta, gamma')'. The mu-equation's
    // infeasible moments are replaced by their group-debiased estimates
    //   sum_j mu           -> N xbar
    //   sum_j mu^2         -> N xbar^2 - s^2_x            (s^2: divisor N-1)
    //   sum_j mu v_j       -> xbar sum_j v_j - cov_n(v, x) (within, N-1)
    // while the intercept and covariate equations keep their observable
    // face-value moments with the student-level x in the mu slot.
    const std::size_t q = grouped.n_covariates();
    const Eigen::Index k = static_cast<Eigen::Index>(2 + q);
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (const Group& g : grouped.groups()) {
        const std::size_t ni = g.y.size();
        const double dn = static_cast<double>(ni);
        double ysum = 0, xsum = 0;
        for (double v : g.y) ysum += v;
        for (double v : g.x) xsum += v;
        const double xbar = xsum / dn;
        double ss_xx = 0, ss_yx = 0;
        for (std::size_t j = 0; j < ni; ++j) {
            ss_xx += g.x[j] * (g.x[j] - xbar);
            ss_yx += g.y[j] * (g.x[j] - xbar);
        }
        const double s2_x = ss_xx / (dn - 1.0);
        const double c_yx = ss_yx / (dn - 1.0);

        // intercept equation
        lhs(0, 0) += dn;
        lhs(0, 1) += dn * xbar;
        rhs(0) += ysum;
        // mu equation (debiased)
        lhs(1, 0) += dn * xbar;
        lhs(1, 1) += dn * xbar * xbar - s2_x;
        rhs(1) += xbar * ysum - c_yx;
        for (std::size_t c = 0; c < q; ++c) {
            const Eigen::Index col = 2 + static_cast<Eigen::Index>(c);
            double zsum = 0, zx = 0, zy = 0, ss_zx = 0;
            for (std::size_t j = 0; j < ni; ++j) {
                const double zj = (*g.z)(static_cast<Eigen::Index>(j),
                                         static_cast<Eigen::Index>(c));
                zsum += zj;
                zx += zj * g.x[j];
                zy += zj * g.y[j];
                ss_zx += zj * (g.x[j] - xbar);
            }
            const double c_zx = ss_zx / (dn - 1.0);
            lhs(0, col) += zsum;
            lhs(1, col) += xbar * zsum - c_zx;
            // covariate equations (face value)
            lhs(col, 0) += zsum;
            lhs(col, 1) += zx;
            rhs(col) += zy;
            for (std::size_t c2 = 0; c2 < q; ++c2) {
                double zz = 0;
                for (std::size_t j = 0; j < ni; ++j) {
                    zz += (*g.z)(static_cast<Eigen::Index>(j),
                                 static_cast<Eigen::Index>(c)) *
                          (*g.z)(static_cast<Eigen::Index>(j),
                                 static_cast<Eigen::Index>(c2));
                }
                lhs(col, 2 + static_cast<Eigen::Index>(c2)) += zz;
            }
        }
    }
    return solve_student_system(lhs, rhs, LinearEstimatorId::debiased_moment);
}

} // namespace latreg
