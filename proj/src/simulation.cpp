#include "latreg/simulation.hpp"

#include "latreg/errors.hpp"
#include "latreg/mathutil.hpp"
#include "latreg/nonlinear.hpp"
#include "latreg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace latreg {

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

PiecewiseLinear::PiecewiseLinear(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw DataError("piecewise-linear function needs at least two knots");
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
            throw DataError("non-finite piecewise-linear knot");
        }
        if (i > 0 && !(xs[i] > xs[i - 1])) {
            throw DataError("piecewise-linear knots must be strictly increasing");
        }
    }
    xs_ = std::move(xs);
    ys_ = std::move(ys);
}

double PiecewiseLinear::operator()(double x) const {
    if (xs_.empty()) {
        throw DataError("evaluating an empty piecewise-linear function");
    }
    if (x <= xs_.front()) return ys_.front();
    if (x >= xs_.back()) return ys_.back();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - xs_.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - xs_[lo]) / (xs_[hi] - xs_[lo]);
    return ys_[lo] + t * (ys_[hi] - ys_[lo]);
}

PiecewiseLinear local_linear_fit(std::span<const double> x, std::span<const double> y,
                                 double bandwidth, int grid_points) {
    const std::size_t n = x.size();
    if (n != y.size()) {
        throw DataError("local_linear_fit: x/y length mismatch");
    }
    if (n < 20) {
        throw DataError("local_linear_fit needs at least 20 points");
    }
    if (grid_points < 2) {
        throw DataError("local_linear_fit needs at least 2 grid points");
    }
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double xlo = *lo_it, xhi = *hi_it;
    if (!(xhi > xlo)) {
        throw DataError("local_linear_fit: degenerate x dispersion");
    }
    double h = bandwidth;
    if (!(h > 0)) {
        // rule of thumb
        h = 1.06 * sample_sd(x) * std::pow(static_cast<double>(n), -0.2);
    }
    if (!(h > 0)) {
        throw DataError("local_linear_fit: bandwidth collapsed to zero");
    }

    std::vector<double> grid(grid_points), fit(grid_points);
    for (int g = 0; g < grid_points; ++g) {
        grid[g] = xlo + (xhi - xlo) * static_cast<double>(g) /
                            static_cast<double>(grid_points - 1);
    }
    for (int g = 0; g < grid_points; ++g) {
        double hg = h;
        for (;;) {
            // Epanechnikov-weighted line through the window, centered at the
            // window's weighted mean of x for conditioning; evaluated at the
            // grid point. Windows too sparse to determine a line are widened
            // (bounded by the data range); only a globally degenerate window
            // falls back to a local constant.
            double s0 = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double u = (x[i] - grid[g]) / hg;
                if (u <= -1.0 || u >= 1.0) continue;
                const double w = 0.75 * (1.0 - u * u);
                s0 += w;
                sx += w * x[i];
                sy += w * y[i];
                sxx += w * x[i] * x[i];
                sxy += w * x[i] * y[i];
            }
            const double xbar = s0 > 0 ? sx / s0 : 0;
            const double vxx = s0 > 0 ? sxx - s0 * xbar * xbar : 0;
            const double floor = 1e-13 * (s0 * hg * hg + s0 * xbar * xbar);
            const bool line_determined = s0 > 0 && vxx > floor;
            if (!line_determined && hg <= 2.0 * (xhi - xlo)) {
                hg *= 2.0;
                continue;
            }
            if (s0 <= 0) {
                throw DataError("local_linear_fit: window never captured data");
            }
            const double ybar = sy / s0;
            if (line_determined) {
                const double cxy = sxy - xbar * sy; // sum w (x - xbar)(y - ybar)
                fit[g] = ybar + (cxy / vxx) * (grid[g] - xbar);
            } else {
                fit[g] = ybar;
            }
            break;
        }
    }
    return PiecewiseLinear(std::move(grid), std::move(fit));
}

// ---------------------------------------------------------------------------
// DgpSpec population quantities
// ---------------------------------------------------------------------------

namespace {

// The population sigma distribution: exact finite sum over an empirical
// sample, 128-node Gauss-Hermite over a log-normal spec.
void for_each_sigma(const DgpSpec& spec,
                    const std::function<void(double sigma, double weight)>& body) {
    if (!spec.sigma_sample.empty()) {
        const double w = 1.0 / static_cast<double>(spec.sigma_sample.size());
        for (double s : spec.sigma_sample) body(s, w);
        return;
    }
    if (!spec.sigma_lognormal) {
        throw DataError("/sigma: no sigma source in spec");
    }
    static const GaussHermiteRule rule = gauss_hermite(128);
    const double inv_sqrt_pi = 1.0 / std::sqrt(3.14159265358979323846);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double logs = spec.sigma_lognormal->mu_log +
                            std::sqrt(2.0) * spec.sigma_lognormal->sd_log * rule.nodes[k];
        body(std::exp(logs), rule.weights[k] * inv_sqrt_pi);
    }
}

} // namespace

void DgpSpec::validate() const {
    if (sigma_sample.empty() && !sigma_lognormal) {
        throw DataError("/sigma: spec needs an empirical sample or a log-normal source");
    }
    for (std::size_t i = 0; i < sigma_sample.size(); ++i) {
        if (!(sigma_sample[i] > 0) || !std::isfinite(sigma_sample[i])) {
            throw DataError("/sigma/sample/" + std::to_string(i) +
                            ": sigma values must be positive and finite");
        }
    }
    if (sigma_lognormal && !(sigma_lognormal->sd_log >= 0)) {
        throw DataError("/sigma/sd_log: must be nonnegative");
    }
    if (cond_mean.empty()) {
        throw DataError("/cond_mean: missing");
    }
    if (cond_var.empty()) {
        throw DataError("/cond_var: missing");
    }
    for (std::size_t i = 0; i < cond_var.ys().size(); ++i) {
        if (cond_var.ys()[i] < 0) {
            throw DataError("/cond_var/y/" + std::to_string(i) +
                            ": conditional variance must be nonnegative");
        }
    }
    if (n < 3) {
        throw DataError("/n: must be at least 3");
    }
    if (is_linear()) {
        const auto& m = std::get<LinearDgp>(mode);
        if (!(m.noise_sd > 0)) {
            throw DataError("/mode/noise_sd: must be positive");
        }
    } else {
        const auto& m = std::get<NonlinearDgp>(mode);
        if (!(m.noise_sd > 0)) {
            throw DataError("/mode/noise_sd: must be positive");
        }
        if (!(m.quantile > 0 && m.quantile < 1)) {
            throw DataError("/mode/quantile: must lie in (0,1)");
        }
    }
}

double DgpSpec::mu_mean() const {
    double acc = 0;
    for_each_sigma(*this, [&](double s, double w) { acc += w * cond_mean(s); });
    return acc;
}

double DgpSpec::mu_var() const {
    const double m = mu_mean();
    double acc = 0;
    for_each_sigma(*this, [&](double s, double w) {
        const double d = cond_mean(s) - m;
        acc += w * (cond_var(s) + d * d);
    });
    return acc;
}

double DgpSpec::log10sigma_mean() const {
    double acc = 0;
    for_each_sigma(*this, [&](double s, double w) { acc += w * std::log10(s); });
    return acc;
}

double DgpSpec::log10sigma_var() const {
    const double m = log10sigma_mean();
    double acc = 0;
    for_each_sigma(*this, [&](double s, double w) {
        const double d = std::log10(s) - m;
        acc += w * d * d;
    });
    return acc;
}

double DgpSpec::cov_mu_log10sigma() const {
    const double mm = mu_mean();
    const double ml = log10sigma_mean();
    double acc = 0;
    for_each_sigma(*this, [&](double s, double w) {
        acc += w * (cond_mean(s) - mm) * (std::log10(s) - ml);
    });
    return acc;
}

double DgpSpec::true_beta0() const {
    if (!is_linear()) {
        throw DataError("true_beta0 is defined for linear mode only");
    }
    const auto& m = std::get<LinearDgp>(mode);
    return m.beta_mu + m.beta_sigma * cov_mu_log10sigma() / mu_var();
}

GaussianPrior DgpSpec::marginal_prior() const {
    GaussianPrior g;
    g.mu = mu_mean();
    g.sigma_mu2 = mu_var();
    return g;
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

namespace {

nlohmann::json pl_to_json(const PiecewiseLinear& f) {
    return {{"x", f.xs()}, {"y", f.ys()}};
}

PiecewiseLinear pl_from_json(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("x") || !j.contains("y")) {
        throw DataError(path + ": expected an object with x and y arrays");
    }
    try {
        return PiecewiseLinear(j.at("x").get<std::vector<double>>(),
                               j.at("y").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace

nlohmann::json DgpSpec::to_json() const {
    nlohmann::json j;
    if (is_linear()) {
        const auto& m = std::get<LinearDgp>(mode);
        j["mode"] = {{"kind", "linear"},
                     {"beta_mu", m.beta_mu},
                     {"beta_sigma", m.beta_sigma},
                     {"noise_sd", m.noise_sd}};
    } else {
        const auto& m = std::get<NonlinearDgp>(mode);
        j["mode"] = {{"kind", "nonlinear"},
                     {"effect", m.effect},
                     {"quantile", m.quantile},
                     {"noise_sd", m.noise_sd}};
    }
    if (!sigma_sample.empty()) {
        j["sigma"] = {{"kind", "empirical"}, {"sample", sigma_sample}};
    } else if (sigma_lognormal) {
        j["sigma"] = {{"kind", "lognormal"},
                      {"mu_log", sigma_lognormal->mu_log},
                      {"sd_log", sigma_lognormal->sd_log}};
    }
    j["cond_mean"] = pl_to_json(cond_mean);
    j["cond_var"] = pl_to_json(cond_var);
    j["n"] = n;
    j["seed"] = seed;
    j["clamp_fraction"] = clamp_fraction;
    return j;
}

DgpSpec DgpSpec::from_json(const nlohmann::json& j) {
    DgpSpec spec;
    try {
        if (!j.contains("mode") || !j.at("mode").contains("kind")) {
            throw DataError("/mode/kind: missing");
        }
        const std::string kind = j.at("mode").at("kind").get<std::string>();
        if (kind == "linear") {
            LinearDgp m;
            m.beta_mu = j.at("mode").value("beta_mu", 0.0);
            m.beta_sigma = j.at("mode").value("beta_sigma", 0.0);
            m.noise_sd = j.at("mode").value("noise_sd", 1.0);
            spec.mode = m;
        } else if (kind == "nonlinear") {
            NonlinearDgp m;
            m.effect = j.at("mode").value("effect", 1.0);
            m.quantile = j.at("mode").value("quantile", 0.75);
            m.noise_sd = j.at("mode").value("noise_sd", 1.0);
            spec.mode = m;
        } else {
            throw DataError("/mode/kind: must be 'linear' or 'nonlinear'");
        }
        if (!j.contains("sigma") || !j.at("sigma").contains("kind")) {
            throw DataError("/sigma/kind: missing");
        }
        const std::string skind = j.at("sigma").at("kind").get<std::string>();
        if (skind == "empirical") {
            spec.sigma_sample = j.at("sigma").at("sample").get<std::vector<double>>();
        } else if (skind == "lognormal") {
            LogNormalSigma ls;
            ls.mu_log = j.at("sigma").at("mu_log").get<double>();
            ls.sd_log = j.at("sigma").at("sd_log").get<double>();
            spec.sigma_lognormal = ls;
        } else {
            throw DataError("/sigma/kind: must be 'empirical' or 'lognormal'");
        }
        spec.cond_mean = pl_from_json(j.at("cond_mean"), "/cond_mean");
        spec.cond_var = pl_from_json(j.at("cond_var"), "/cond_var");
        spec.n = j.value("n", static_cast<std::size_t>(10058));
        spec.seed = j.value("seed", static_cast<std::uint64_t>(0));
        spec.clamp_fraction = j.value("clamp_fraction", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("/: malformed spec JSON: ") + e.what());
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

DgpSpec calibrate_dgp(const ObservationSet& data) {
    const PiecewiseLinear mhat = local_linear_fit(data.sigma(), data.x());
    std::vector<double> resid2(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = data.x()[i] - mhat(data.sigma()[i]);
        resid2[i] = r * r;
    }
    const PiecewiseLinear vfit = local_linear_fit(data.sigma(), resid2);

    // s^2(sigma) = var(X|sigma) - sigma^2, clamped at zero where the
    // finite-sample estimate dips negative.
    std::vector<double> grid = vfit.xs();
    std::vector<double> s2(grid.size());
    std::size_t clamped = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double v = vfit.ys()[g] - grid[g] * grid[g];
        if (v < 0) {
            s2[g] = 0;
            ++clamped;
        } else {
            s2[g] = v;
        }
    }
    const double clamp_fraction =
        static_cast<double>(clamped) / static_cast<double>(grid.size());
    if (clamp_fraction > 0.5) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "calibration infeasible: conditional variance clamped on %.0f%% of "
                      "the grid",
                      100.0 * clamp_fraction);
        throw DataError(buf);
    }

    DgpSpec spec;
    spec.mode = LinearDgp{};
    spec.sigma_sample = data.sigma();
    spec.cond_mean = mhat;
    spec.cond_var = PiecewiseLinear(std::move(grid), std::move(s2));
    spec.n = data.size();
    spec.clamp_fraction = clamp_fraction;
    return spec;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

namespace {

double draw_sigma(const DgpSpec& spec, RngStream& rng) {
    if (!spec.sigma_sample.empty()) {
        return spec.sigma_sample[rng.bounded(spec.sigma_sample.size())];
    }
    return std::exp(spec.sigma_lognormal->mu_log +
                    spec.sigma_lognormal->sd_log * rng.normal());
}

} // namespace

SimulatedLinear simulate_linear(const DgpSpec& spec, std::size_t n, std::uint64_t seed,
                                std::uint64_t stream) {
    spec.validate();
    if (!spec.is_linear()) {
        throw DataError("simulate_linear requires a linear-mode spec");
    }
    const auto& m = std::get<LinearDgp>(spec.mode);
    RngStream rng(seed, stream);
    std::vector<double> y(n), x(n), sigma(n), mu(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = draw_sigma(spec, rng);
        const double mi = spec.cond_mean(s) + std::sqrt(spec.cond_var(s)) * rng.normal();
        sigma[i] = s;
        mu[i] = mi;
        x[i] = mi + s * rng.normal();
        y[i] = m.beta_mu * mi + m.beta_sigma * std::log10(s) + m.noise_sd * rng.normal();
    }
    SimulatedLinear out{ObservationSet::make(std::move(y), std::move(x), std::move(sigma)),
                        LatentTruth{std::move(mu)}, spec.true_beta0()};
    return out;
}

SimulatedNonlinear simulate_nonlinear(const DgpSpec& spec, std::size_t n,
                                      std::uint64_t seed, std::uint64_t stream) {
    spec.validate();
    if (spec.is_linear()) {
        throw DataError("simulate_nonlinear requires a nonlinear-mode spec");
    }
    const auto& m = std::get<NonlinearDgp>(spec.mode);
    const GaussianPrior g = spec.marginal_prior();
    const double sd_g = std::sqrt(g.sigma_mu2);
    const double mu0 = g.mu + sd_g * normal_quantile(m.quantile);
    // var(1(mu > mu0)) = q(1-q) at the q-quantile threshold.
    const double tau0 = m.effect / std::sqrt(m.quantile * (1.0 - m.quantile));

    RngStream rng(seed, stream);
    std::vector<double> y(n), x(n), sigma(n), mu(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = draw_sigma(spec, rng);
        const double mi = g.mu + sd_g * rng.normal();
        sigma[i] = s;
        mu[i] = mi;
        x[i] = mi + s * rng.normal();
        y[i] = tau0 * (mi > mu0 ? 1.0 : 0.0) + m.noise_sd * rng.normal();
    }
    SimulatedNonlinear out{
        ObservationSet::make(std::move(y), std::move(x), std::move(sigma)),
        LatentTruth{std::move(mu)}, tau0, mu0, g};
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo engine
// ---------------------------------------------------------------------------

std::vector<LinearMcEstimator>
standard_linear_mc_estimators(const std::vector<std::string>& names) {
    std::vector<LinearMcEstimator> out;
    for (const std::string& name : names) {
        if (name == "classical") {
            out.push_back({name, [](const SimulatedLinear& s) {
                               return classical_eiv(sample_moments(s.data)).beta;
                           }});
        } else if (name == "shrinkage") {
            out.push_back({name, [](const SimulatedLinear& s) {
                               const MomentSummary m = sample_moments(s.data);
                               const GaussianPrior prior = fit_gaussian_prior(m);
                               const auto pm = linear_shrinkage(s.data, prior);
                               return regress_on_shrinkage(s.data, pm).beta;
                           }});
        } else if (name == "naive_ols") {
            out.push_back({name, [](const SimulatedLinear& s) {
                               return naive_ols(sample_moments(s.data)).beta;
                           }});
        } else {
            throw DataError("unknown linear Monte Carlo estimator '" + name + "'");
        }
    }
    return out;
}

std::vector<NonlinearMcEstimator>
standard_nonlinear_mc_estimators(const std::vector<std::string>& names,
                                 const NpmleConfig& npmle) {
    std::vector<NonlinearMcEstimator> out;
    for (const std::string& name : names) {
        if (name == "oracle") {
            out.push_back({name, [](const SimulatedNonlinear& s) {
                               return oracle_tau(s.data, s.prior,
                                                 Transform::indicator_above(s.mu0))
                                   .tau;
                           }});
        } else if (name == "npeb") {
            out.push_back({name, [npmle](const SimulatedNonlinear& s) {
                               return npeb_tau(s.data, Transform::indicator_above(s.mu0),
                                               npmle)
                                   .tau;
                           }});
        } else if (name == "plugin") {
            out.push_back({name, [](const SimulatedNonlinear& s) {
                               return plugin_tau(s.data, s.prior,
                                                 Transform::indicator_above(s.mu0))
                                   .tau;
                           }});
        } else {
            throw DataError("unknown nonlinear Monte Carlo estimator '" + name + "'");
        }
    }
    return out;
}

namespace {

// Per-cell raw results; reduced serially so output is schedule-independent.
struct CellStats {
    std::vector<std::vector<double>> values; // [estimator][rep]
    std::vector<std::vector<char>> ok;       // [estimator][rep]
};

McSummary reduce_cells(const std::vector<DgpSpec>& cells,
                       const std::vector<std::string>& estimator_names,
                       const std::vector<CellStats>& stats,
                       const std::vector<std::vector<double>>& coords,
                       const std::vector<double>& true_params,
                       const std::vector<std::string>& coord_names, int reps) {
    McSummary summary;
    summary.coord_names = coord_names;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        McCell cell;
        cell.coords = coords[c];
        cell.true_param = true_params[c];
        const std::size_t ne = estimator_names.size();
        // A replication counts only when every estimator succeeded on it.
        std::vector<char> rep_ok(static_cast<std::size_t>(reps), 1);
        for (std::size_t e = 0; e < ne; ++e) {
            for (int r = 0; r < reps; ++r) {
                if (!stats[c].ok[e][static_cast<std::size_t>(r)]) {
                    rep_ok[static_cast<std::size_t>(r)] = 0;
                }
            }
        }
        std::size_t used = 0;
        for (char f : rep_ok) used += f;
        for (std::size_t e = 0; e < ne; ++e) {
            McEstimatorCell ec;
            ec.name = estimator_names[e];
            ec.reps_used = used;
            for (int r = 0; r < reps; ++r) {
                if (!stats[c].ok[e][static_cast<std::size_t>(r)]) ++ec.failures;
                if (rep_ok[static_cast<std::size_t>(r)]) {
                    ec.draws.push_back(stats[c].values[e][static_cast<std::size_t>(r)]);
                }
            }
            if (!ec.draws.empty()) {
                double s = 0;
                for (double d : ec.draws) s += d;
                ec.mean = s / static_cast<double>(ec.draws.size());
                ec.bias = ec.mean - cell.true_param;
                double v = 0, q = 0;
                for (double d : ec.draws) {
                    v += (d - ec.mean) * (d - ec.mean);
                    q += (d - cell.true_param) * (d - cell.true_param);
                }
                ec.variance = v / static_cast<double>(ec.draws.size());
                ec.mse = q / static_cast<double>(ec.draws.size());
            }
            cell.estimators.push_back(std::move(ec));
        }
        cell.flagged = static_cast<double>(reps - static_cast<int>(used)) >
                       0.1 * static_cast<double>(reps);
        summary.cells.push_back(std::move(cell));
    }
    return summary;
}

} // namespace

McSummary run_monte_carlo_linear(const std::vector<DgpSpec>& cells,
                                 const std::vector<LinearMcEstimator>& estimators,
                                 int reps, std::uint64_t seed, int threads) {
    if (reps < 2) {
        throw DataError("Monte Carlo needs reps >= 2");
    }
    if (cells.empty() || estimators.empty()) {
        throw DataError("Monte Carlo needs at least one cell and one estimator");
    }
    for (const DgpSpec& spec : cells) {
        spec.validate();
        if (!spec.is_linear()) {
            throw DataError("run_monte_carlo_linear requires linear-mode specs");
        }
    }
    const std::size_t ne = estimators.size();
    std::vector<CellStats> stats(cells.size());
    for (auto& s : stats) {
        s.values.assign(ne, std::vector<double>(static_cast<std::size_t>(reps), 0));
        s.ok.assign(ne, std::vector<char>(static_cast<std::size_t>(reps), 0));
    }
    parallel_for(cells.size() * static_cast<std::size_t>(reps), threads,
                 [&](std::size_t task) {
                     const std::size_t c = task / static_cast<std::size_t>(reps);
                     const std::size_t r = task % static_cast<std::size_t>(reps);
                     const std::uint64_t stream =
                         (static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint64_t>(r);
                     const SimulatedLinear sim =
                         simulate_linear(cells[c], cells[c].n, seed, stream);
                     for (std::size_t e = 0; e < ne; ++e) {
                         try {
                             stats[c].values[e][r] = estimators[e].fn(sim);
                             stats[c].ok[e][r] = 1;
                         } catch (const EstimatorError&) {
                         }
                     }
                 });
    std::vector<std::string> names;
    std::vector<std::vector<double>> coords;
    std::vector<double> truths;
    for (const auto& est : estimators) names.push_back(est.name);
    for (const DgpSpec& spec : cells) {
        const auto& m = std::get<LinearDgp>(spec.mode);
        coords.push_back({m.beta_mu * std::sqrt(spec.mu_var()),
                          m.beta_sigma * std::sqrt(spec.log10sigma_var())});
        truths.push_back(spec.true_beta0());
    }
    return reduce_cells(cells, names, stats, coords, truths,
                        {"beta_mu_scaled", "beta_sigma_scaled"}, reps);
}

McSummary run_monte_carlo_nonlinear(const std::vector<DgpSpec>& cells,
                                    const std::vector<NonlinearMcEstimator>& estimators,
                                    int reps, std::uint64_t seed, int threads) {
    if (reps < 2) {
        throw DataError("Monte Carlo needs reps >= 2");
    }
    if (cells.empty() || estimators.empty()) {
        throw DataError("Monte Carlo needs at least one cell and one estimator");
    }
    for (const DgpSpec& spec : cells) {
        spec.validate();
        if (spec.is_linear()) {
            throw DataError("run_monte_carlo_nonlinear requires nonlinear-mode specs");
        }
    }
    const std::size_t ne = estimators.size();
    std::vector<CellStats> stats(cells.size());
    for (auto& s : stats) {
        s.values.assign(ne, std::vector<double>(static_cast<std::size_t>(reps), 0));
        s.ok.assign(ne, std::vector<char>(static_cast<std::size_t>(reps), 0));
    }
    parallel_for(cells.size() * static_cast<std::size_t>(reps), threads,
                 [&](std::size_t task) {
                     const std::size_t c = task / static_cast<std::size_t>(reps);
                     const std::size_t r = task % static_cast<std::size_t>(reps);
                     const std::uint64_t stream =
                         (static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint64_t>(r);
                     const SimulatedNonlinear sim =
                         simulate_nonlinear(cells[c], cells[c].n, seed, stream);
                     for (std::size_t e = 0; e < ne; ++e) {
                         try {
                             stats[c].values[e][r] = estimators[e].fn(sim);
                             stats[c].ok[e][r] = 1;
                         } catch (const EstimatorError&) {
                         }
                     }
                 });
    std::vector<std::string> names;
    std::vector<std::vector<double>> coords;
    std::vector<double> truths;
    for (const auto& est : estimators) names.push_back(est.name);
    for (const DgpSpec& spec : cells) {
        const auto& m = std::get<NonlinearDgp>(spec.mode);
        const double tau0 = m.effect / std::sqrt(m.quantile * (1.0 - m.quantile));
        coords.push_back({tau0, m.quantile});
        truths.push_back(tau0);
    }
    return reduce_cells(cells, names, stats, coords, truths, {"tau0", "quantile"}, reps);
}

DgpSpec with_scaled_coefficients(const DgpSpec& base, double scaled_beta_mu,
                                 double scaled_beta_sigma) {
    if (!base.is_linear()) {
        throw DataError("scaled coefficients apply to linear-mode specs");
    }
    DgpSpec spec = base;
    auto& m = std::get<LinearDgp>(spec.mode);
    const double sd_mu = std::sqrt(base.mu_var());
    const double sd_ls = std::sqrt(base.log10sigma_var());
    if (!(sd_mu > 0)) {
        throw DataError("spec implies zero latent variance; cannot scale beta_mu");
    }
    if (!(sd_ls > 0)) {
        throw DataError("spec implies constant sigma; cannot scale beta_sigma");
    }
    m.beta_mu = scaled_beta_mu / sd_mu;
    m.beta_sigma = scaled_beta_sigma / sd_ls;
    return spec;
}

std::vector<DgpSpec> default_linear_grid(const DgpSpec& base) {
    std::vector<DgpSpec> cells;
    for (int i = 0; i < 11; ++i) {
        const double bmu = -0.3 + 0.06 * static_cast<double>(i);
        for (int k = 0; k < 7; ++k) {
            const double bsig = 0.05 * static_cast<double>(k);
            cells.push_back(with_scaled_coefficients(base, bmu, bsig));
        }
    }
    return cells;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

void McSummary::write_summary_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    for (const auto& name : coord_names) out << name << ',';
    out << "estimator,statistic,value\n";
    auto emit = [&](const McCell& cell, const std::string& est, const char* stat,
                    double value) {
        for (double coord : cell.coords) out << fmt17(coord) << ',';
        out << est << ',' << stat << ',' << fmt17(value) << '\n';
    };
    for (const McCell& cell : cells) {
        emit(cell, "dgp", "true_param", cell.true_param);
        emit(cell, "dgp", "flagged", cell.flagged ? 1.0 : 0.0);
        for (const McEstimatorCell& ec : cell.estimators) {
            emit(cell, ec.name, "mean", ec.mean);
            emit(cell, ec.name, "bias", ec.bias);
            emit(cell, ec.name, "variance", ec.variance);
            emit(cell, ec.name, "mse", ec.mse);
            emit(cell, ec.name, "reps", static_cast<double>(ec.reps_used));
            emit(cell, ec.name, "failures", static_cast<double>(ec.failures));
        }
    }
}

void McSummary::write_density_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    for (const auto& name : coord_names) out << name << ',';
    out << "rep,estimator,estimate\n";
    for (const McCell& cell : cells) {
        for (const McEstimatorCell& ec : cell.estimators) {
            for (std::size_t r = 0; r < ec.draws.size(); ++r) {
                for (double coord : cell.coords) out << fmt17(coord) << ',';
                out << r << ',' << ec.name << ',' << fmt17(ec.draws[r]) << '\n';
            }
        }
    }
}

} // namespace latreg
