#include "latreg/report.hpp"

namespace latreg {

using nlohmann::json;

json to_json(const GaussianPrior& p) {
    return {{"mu", p.mu}, {"sigma_mu2", p.sigma_mu2}, {"floored", p.floored}};
}

json to_json(const LinearEstimate& e) {
    json j{{"estimator", to_string(e.id)},
           {"beta", e.beta},
           {"intercept", e.intercept},
           {"weighted", e.weighted}};
    if (e.covariate_coefs) {
        j["covariate_coefs"] =
            std::vector<double>(e.covariate_coefs->data(),
                                e.covariate_coefs->data() + e.covariate_coefs->size());
    }
    if (e.naive_slope) j["naive_slope"] = *e.naive_slope;
    if (e.inflation_factor) j["inflation_factor"] = *e.inflation_factor;
    if (e.prior) j["prior"] = to_json(*e.prior);
    return j;
}

json to_json(const TauEstimate& e) {
    return {{"estimator", to_string(e.id)},
            {"tau", e.tau},
            {"rho", e.rho},
            {"regressor_variance", e.regressor_variance},
            {"prior_used", e.prior_used}};
}

json to_json(const BootstrapResult& r) {
    return {{"point", r.point},
            {"se", r.se},
            {"ci", {{"level", r.level}, {"lo", r.ci_lo}, {"hi", r.ci_hi}}},
            {"normal_ci", {{"lo", r.normal_ci_lo}, {"hi", r.normal_ci_hi}}},
            {"requested", r.requested},
            {"failed_draws", r.failed_draws},
            {"seed", r.seed},
            {"draws", r.draws}};
}

json to_json(const DiagnosticReport& r) {
    return {{"test", to_string(r.id)},
            {"coef", r.coef},
            {"se", r.se},
            {"t_stat", r.t_stat},
            {"flagged", r.flagged}};
}

json RunReport::to_json() const {
    json j{{"schema_version", kReportSchemaVersion},
           {"tool_version", kVersion},
           {"command", command},
           {"input_digest", input_digest}};
    json ests = json::array();
    for (const auto& entry : estimates) {
        json e{{"estimate", latreg::to_json(entry.estimate)}};
        if (entry.bootstrap) {
            e["bootstrap"] = latreg::to_json(*entry.bootstrap);
        }
        ests.push_back(std::move(e));
    }
    j["estimates"] = std::move(ests);
    json diags = json::array();
    for (const auto& d : diagnostics) {
        diags.push_back(latreg::to_json(d));
    }
    j["diagnostics"] = std::move(diags);
    if (timing_ms) {
        j["timing_ms"] = *timing_ms;
    }
    return j;
}

json error_json(const std::string& type, const std::string& message) {
    return {{"error", {{"type", type}, {"message", message}}}};
}

} // namespace latreg
