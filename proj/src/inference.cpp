#include "latreg/inference.hpp"

#include "latreg/errors.hpp"
#include "latreg/mathutil.hpp"
#include "latreg/rng.hpp"
#include "latreg/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace latreg {

std::string to_string(DiagnosticId id) {
    switch (id) {
        case DiagnosticId::y_on_log_sigma: return "y_on_log_sigma";
        case DiagnosticId::x_on_log_sigma: return "x_on_log_sigma";
        case DiagnosticId::condvar_constancy: return "condvar_constancy";
    }
    return "?";
}

namespace {

constexpr double kZ95 = 1.959963984540054;

ObservationSet resample_units(const ObservationSet& data, RngStream& rng) {
    const std::size_t n = data.size();
    std::vector<double> y(n), x(n), sigma(n), weight;
    const bool weighted = !data.unit_weights();
    if (weighted) weight.resize(n);
    std::optional<Eigen::MatrixXd> z;
    if (data.has_covariates()) {
        z = Eigen::MatrixXd(n, data.covariates().cols());
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = rng.bounded(n);
        y[i] = data.y()[j];
        x[i] = data.x()[j];
        sigma[i] = data.sigma()[j];
        if (weighted) weight[i] = data.weight()[j];
        if (z) z->row(static_cast<Eigen::Index>(i)) = data.covariates().row(
                   static_cast<Eigen::Index>(j));
    }
    return ObservationSet::make(std::move(y), std::move(x), std::move(sigma),
                                std::move(weight), std::move(z));
}

GroupedData resample_groups(const GroupedData& data, RngStream& rng) {
    const std::size_t g = data.n_groups();
    std::vector<Group> groups;
    groups.reserve(g);
    for (std::size_t i = 0; i < g; ++i) {
        groups.push_back(data.groups()[rng.bounded(g)]);
    }
    return GroupedData::make(std::move(groups));
}

template <typename Data, typename Estimator, typename Resampler>
BootstrapResult bootstrap_impl(const Data& data, const Estimator& estimator, int B,
                               std::uint64_t seed, double level, int threads,
                               const Resampler& resample) {
    if (B < 2) {
        throw DataError("bootstrap needs B >= 2");
    }
    if (!(level > 0 && level < 1)) {
        throw DataError("bootstrap level must lie in (0,1)");
    }
    BootstrapResult result;
    result.requested = B;
    result.seed = seed;
    result.level = level;
    result.point = estimator(data);

    // Draw r lives on RNG stream (seed, r); slots are written by index so the
    // result is identical for any thread count.
    std::vector<double> values(static_cast<std::size_t>(B));
    std::vector<char> ok(static_cast<std::size_t>(B), 0);
    parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t r) {
        RngStream rng(seed, static_cast<std::uint64_t>(r));
        try {
            values[r] = estimator(resample(data, rng));
            ok[r] = 1;
        } catch (const EstimatorError&) {
        } catch (const DataError&) {
        }
    });

    for (int r = 0; r < B; ++r) {
        if (ok[static_cast<std::size_t>(r)]) {
            result.draws.push_back(values[static_cast<std::size_t>(r)]);
        } else {
            ++result.failed_draws;
        }
    }
    if (result.failed_draws > B / 2 || result.draws.size() < 2) {
        throw BootstrapError("bootstrap unstable: " + std::to_string(result.failed_draws) +
                             " of " + std::to_string(B) + " draws failed");
    }

    result.se = sample_sd(result.draws);
    std::vector<double> sorted = result.draws;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = (1.0 - level) / 2.0;
    result.ci_lo = quantile_sorted(sorted, alpha);
    result.ci_hi = quantile_sorted(sorted, 1.0 - alpha);
    const double z = normal_quantile(1.0 - alpha);
    result.normal_ci_lo = result.point - z * result.se;
    result.normal_ci_hi = result.point + z * result.se;
    return result;
}

} // namespace

BootstrapResult bootstrap(const ObservationSet& data, const ScalarEstimator& estimator,
                          int B, std::uint64_t seed, double level, int threads) {
    return bootstrap_impl(data, estimator, B, seed, level, threads,
                          [](const ObservationSet& d, RngStream& rng) {
                              return resample_units(d, rng);
                          });
}

BootstrapResult bootstrap(const GroupedData& data, const GroupedScalarEstimator& estimator,
                          int B, std::uint64_t seed, double level, int threads) {
    return bootstrap_impl(data, estimator, B, seed, level, threads,
                          [](const GroupedData& d, RngStream& rng) {
                              return resample_groups(d, rng);
                          });
}

namespace {

double slope_on_log10_sigma(const ObservationSet& data, bool use_y) {
    const std::size_t n = data.size();
    double ml = 0, mv = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ml += std::log10(data.sigma()[i]);
        mv += use_y ? data.y()[i] : data.x()[i];
    }
    ml /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double vl = 0, c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dl = std::log10(data.sigma()[i]) - ml;
        vl += dl * dl;
        c += dl * ((use_y ? data.y()[i] : data.x()[i]) - mv);
    }
    if (!(vl > 0)) {
        throw EstimatorError("no sigma dispersion in draw");
    }
    return c / vl;
}

// Range of the fitted var(X|sigma) - sigma^2 curve over an equispaced sigma
// grid; large values indicate the latent variance moves with sigma.
double condvar_range(const ObservationSet& data, int grid_points) {
    const auto [lo_it, hi_it] = std::minmax_element(data.sigma().begin(), data.sigma().end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        throw EstimatorError("no sigma dispersion in draw");
    }
    const PiecewiseLinear mhat = local_linear_fit(data.sigma(), data.x(), 0, grid_points);
    std::vector<double> resid2(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = data.x()[i] - mhat(data.sigma()[i]);
        resid2[i] = r * r;
    }
    const PiecewiseLinear vhat = local_linear_fit(data.sigma(), resid2, 0, grid_points);
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < grid_points; ++g) {
        const double s = lo + (hi - lo) * static_cast<double>(g) /
                                  static_cast<double>(grid_points - 1);
        const double v = vhat(s) - s * s;
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    return vmax - vmin;
}

} // namespace

std::vector<DiagnosticReport> diagnose_precision(const ObservationSet& data,
                                                 const DiagnosticConfig& config) {
    const auto [lo_it, hi_it] = std::minmax_element(data.sigma().begin(), data.sigma().end());
    if (!(*hi_it - *lo_it > 1e-12 * std::abs(*hi_it))) {
        throw EstimatorError("diagnostics undefined under homoskedasticity");
    }

    struct Item {
        DiagnosticId id;
        ScalarEstimator stat;
        std::uint64_t sub_seed;
    };
    const int gp = config.grid_points;
    const std::vector<Item> items = {
        {DiagnosticId::y_on_log_sigma,
         [](const ObservationSet& d) { return slope_on_log10_sigma(d, true); },
         config.seed + 1},
        {DiagnosticId::x_on_log_sigma,
         [](const ObservationSet& d) { return slope_on_log10_sigma(d, false); },
         config.seed + 2},
        {DiagnosticId::condvar_constancy,
         [gp](const ObservationSet& d) { return condvar_range(d, gp); },
         config.seed + 3},
    };

    std::vector<DiagnosticReport> reports;
    for (const Item& item : items) {
        const BootstrapResult boot = bootstrap(data, item.stat, config.bootstrap_B,
                                               item.sub_seed, 0.95, config.threads);
        DiagnosticReport rep;
        rep.id = item.id;
        rep.coef = boot.point;
        rep.se = boot.se;
        rep.t_stat = boot.se > 0 ? boot.point / boot.se : 0.0;
        rep.flagged = std::abs(rep.t_stat) > kZ95;
        reports.push_back(rep);
    }
    return reports;
}

} // namespace latreg
