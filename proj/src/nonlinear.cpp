#include "latreg/nonlinear.hpp"

#include "latreg/errors.hpp"
#include "latreg/moments.hpp"

#include <cmath>
#include <cstdio>

namespace latreg {

std::string to_string(TauEstimatorId id) {
    switch (id) {
        case TauEstimatorId::oracle: return "oracle";
        case TauEstimatorId::npeb: return "npeb";
        case TauEstimatorId::plugin: return "plugin";
    }
    return "?";
}

namespace {

std::string describe(const PriorRef& prior) {
    if (std::holds_alternative<GaussianPrior>(prior)) {
        const auto& g = std::get<GaussianPrior>(prior);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "gaussian(mu=%.6g, sigma_mu2=%.6g)", g.mu,
                      g.sigma_mu2);
        return buf;
    }
    const auto& d = std::get<DiscretePrior>(prior);
    return "discrete(" + std::to_string(d.size()) + " atoms)";
}

double posterior_mean(const PriorRef& prior, const Transform& f, double x, double sigma) {
    if (std::holds_alternative<GaussianPrior>(prior)) {
        return posterior_mean_gaussian(std::get<GaussianPrior>(prior), f, x, sigma);
    }
    return posterior_mean_discrete(std::get<DiscretePrior>(prior), f, x, sigma);
}

TauEstimate regress_on(const ObservationSet& data, const std::vector<double>& regressor,
                       TauEstimatorId id, std::string prior_descr) {
    const MomentSummary mx = sample_moments(data);
    const std::size_t n = data.size();
    double mr = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mr += regressor[i];
        my += data.y()[i];
    }
    mr /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vr = 0, cyr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dr = regressor[i] - mr;
        vr += dr * dr;
        cyr += dr * (data.y()[i] - my);
    }
    vr /= static_cast<double>(n);
    cyr /= static_cast<double>(n);
    if (!(vr > variance_floor(mx.var_x)) || !(vr > 0)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "degenerate posterior-mean regressor: var_n = %.6g",
                      vr);
        throw EstimatorError(buf);
    }
    TauEstimate e;
    e.id = id;
    e.tau = cyr / vr;
    e.rho = my - e.tau * mr;
    e.regressor_variance = vr;
    e.prior_used = std::move(prior_descr);
    return e;
}

} // namespace

TauEstimate oracle_tau(const ObservationSet& data, const PriorRef& prior,
                       const Transform& f) {
    std::vector<double> regressor(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        regressor[i] = posterior_mean(prior, f, data.x()[i], data.sigma()[i]);
    }
    return regress_on(data, regressor, TauEstimatorId::oracle, describe(prior));
}

TauEstimate npeb_tau(const ObservationSet& data, const Transform& f,
                     const NpmleConfig& config) {
    const NpmleResult fit = fit_npmle(data, config);
    std::vector<double> regressor(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        regressor[i] = posterior_mean_discrete(fit.prior, f, data.x()[i], data.sigma()[i]);
    }
    TauEstimate e = regress_on(data, regressor, TauEstimatorId::npeb,
                               "npmle(" + std::to_string(fit.prior.size()) + " atoms)");
    return e;
}

TauEstimate plugin_tau(const ObservationSet& data, const PriorRef& prior,
                       const Transform& f) {
    const Transform id = Transform::identity();
    std::vector<double> regressor(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        regressor[i] = f(posterior_mean(prior, id, data.x()[i], data.sigma()[i]));
    }
    return regress_on(data, regressor, TauEstimatorId::plugin, describe(prior));
}

} // namespace latreg
