#include "latreg/errors.hpp"
#include "latreg/linear.hpp"
#include "latreg/mathutil.hpp"
#include "latreg/moments.hpp"
#include "latreg/rng.hpp"
#include "latreg/simulation.hpp"

#include <doctest.h>

#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace latreg;
using latreg::testing::close_rel;

namespace {

// A smooth synthetic design: sigma ~ 10^U[-1.3,-0.522], m linear in log10
// sigma, constant conditional variance.
DgpSpec smooth_spec(std::size_t sigma_draws = 2000, std::uint64_t seed = 5) {
    RngStream rng(seed);
    std::vector<double> sample(sigma_draws);
    for (auto& s : sample) {
        s = std::pow(10.0, -1.3 + 0.778 * rng.uniform01());
    }
    std::sort(sample.begin(), sample.end());
    const double lo = sample.front(), hi = sample.back();
    std::vector<double> knots(101), m(101), v(101);
    for (int i = 0; i < 101; ++i) {
        knots[i] = lo + (hi - lo) * i / 100.0;
        m[i] = 0.5 * std::log10(knots[i]);
        v[i] = 0.03;
    }
    DgpSpec spec;
    spec.mode = LinearDgp{1.0, 0.5, 1.0};
    spec.sigma_sample = std::move(sample);
    spec.cond_mean = PiecewiseLinear(knots, m);
    spec.cond_var = PiecewiseLinear(std::move(knots), std::move(v));
    spec.n = 2000;
    return spec;
}

} // namespace

TEST_CASE("piecewise linear: interpolation and constant extrapolation") {
    const PiecewiseLinear f({0, 1, 3}, {0, 2, -2});
    CHECK(f(0.5) == doctest::Approx(1.0));
    CHECK(f(2.0) == doctest::Approx(0.0));
    CHECK(f(-5) == doctest::Approx(0.0));
    CHECK(f(9) == doctest::Approx(-2.0));
    CHECK_THROWS_AS(PiecewiseLinear({1, 0}, {0, 1}), DataError);
    CHECK_THROWS_AS(PiecewiseLinear({0}, {1}), DataError);
}

TEST_CASE("local linear fit reproduces exact lines for any bandwidth") {
    RngStream rng(191);
    const std::size_t n = 200;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 3.0 * rng.uniform01();
        y[i] = 2.0 * x[i] + 1.0;
    }
    for (double h : {0.05, 0.4, 2.0, 0.0 /* auto */}) {
        const auto fit = local_linear_fit(x, y, h);
        for (std::size_t g = 0; g < fit.xs().size(); ++g) {
            CHECK(std::abs(fit.ys()[g] - (2.0 * fit.xs()[g] + 1.0)) < 1e-8);
        }
    }
}

TEST_CASE("local linear fit tracks a smooth curve") {
    RngStream rng(193);
    const std::size_t n = 5000;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.uniform01();
        y[i] = x[i] * x[i];
    }
    const auto fit = local_linear_fit(x, y);
    double max_err = 0;
    for (std::size_t g = 0; g < fit.xs().size(); ++g) {
        max_err = std::max(max_err, std::abs(fit.ys()[g] - fit.xs()[g] * fit.xs()[g]));
    }
    CHECK(max_err < 0.02);
}

TEST_CASE("local linear fit edge cases") {
    RngStream rng(197);
    std::vector<double> x(30), y(30, 4.2);
    for (auto& v : x) v = rng.uniform01();
    const auto fit = local_linear_fit(x, y);
    for (double v : fit.ys()) CHECK(v == doctest::Approx(4.2).epsilon(1e-10));

    std::vector<double> small(10, 1.0), ys(10, 0.0);
    CHECK_THROWS_AS(local_linear_fit(small, ys), DataError);

    std::vector<double> flat(25, 2.0), yf(25, 0.0);
    CHECK_THROWS_AS(local_linear_fit(flat, yf), DataError);
}

TEST_CASE("DgpSpec validation uses pointer-style paths") {
    DgpSpec spec = smooth_spec(200);
    spec.mode = NonlinearDgp{1.0, 1.5, 1.0}; // quantile out of range
    try {
        spec.validate();
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("/mode/quantile") != std::string::npos);
    }
}

TEST_CASE("DgpSpec JSON round trip") {
    DgpSpec spec = smooth_spec(150);
    std::get<LinearDgp>(spec.mode).beta_mu = 0.7;
    spec.seed = 99;
    const auto j = spec.to_json();
    const DgpSpec back = DgpSpec::from_json(j);
    CHECK(back.sigma_sample == spec.sigma_sample);
    CHECK(back.cond_mean.xs() == spec.cond_mean.xs());
    CHECK(back.cond_mean.ys() == spec.cond_mean.ys());
    CHECK(back.cond_var.ys() == spec.cond_var.ys());
    CHECK(std::get<LinearDgp>(back.mode).beta_mu == 0.7);
    CHECK(back.seed == 99);
    CHECK(back.n == spec.n);
}

TEST_CASE("calibration recovers a known design") {
    // Self-consistency oracle: simulate from a known (m, s^2), calibrate,
    // compare on the calibration grid.
    RngStream rng(199);
    const std::size_t n = 10000;
    std::vector<double> y(n, 0.0), x(n), s(n);
    auto m_true = [](double sig) { return 0.2 + 0.4 * sig; };
    const double s2_true = 0.02;
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = 0.05 + 0.25 * rng.uniform01();
        const double mu = m_true(s[i]) + std::sqrt(s2_true) * rng.normal();
        x[i] = mu + s[i] * rng.normal();
    }
    const auto spec = calibrate_dgp(ObservationSet::make(y, x, s));
    double em = 0, ev = 0;
    for (std::size_t g = 0; g < spec.cond_mean.xs().size(); ++g) {
        const double sig = spec.cond_mean.xs()[g];
        em = std::max(em, std::abs(spec.cond_mean.ys()[g] - m_true(sig)));
        ev = std::max(ev, std::abs(spec.cond_var.ys()[g] - s2_true));
    }
    CHECK(em <= 0.05);
    CHECK(ev <= 0.05);
    CHECK(spec.clamp_fraction <= 0.5);
    CHECK(spec.sigma_sample == s);
}

TEST_CASE("calibration fails when the implied variance is mostly negative") {
    RngStream rng(211);
    const std::size_t n = 2000;
    std::vector<double> y(n, 0.0), x(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = 0.4 + 0.2 * rng.uniform01();
        x[i] = 0.05 * rng.normal(); // var(X) << E sigma^2, mu independent of sigma
    }
    CHECK_THROWS_AS(calibrate_dgp(ObservationSet::make(y, x, s)), DataError);
}

TEST_CASE("simulate_linear: exact true-beta formulas") {
    DgpSpec spec = smooth_spec(400);
    SUBCASE("beta_sigma = 0 gives beta0 = beta_mu") {
        std::get<LinearDgp>(spec.mode) = {0.8, 0.0, 1.0};
        CHECK(spec.true_beta0() == doctest::Approx(0.8).epsilon(1e-14));
    }
    SUBCASE("constant conditional mean gives beta0 = beta_mu for any beta_sigma") {
        std::vector<double> knots = spec.cond_mean.xs();
        spec.cond_mean = PiecewiseLinear(knots, std::vector<double>(knots.size(), 0.4));
        std::get<LinearDgp>(spec.mode) = {0.8, 2.5, 1.0};
        CHECK(spec.true_beta0() == doctest::Approx(0.8).epsilon(1e-12));
    }
}

TEST_CASE("simulate_linear: true beta matches a brute-force population simulation") {
    const DgpSpec spec = smooth_spec(500);
    const double truth = spec.true_beta0();
    // ten batches of one million population draws
    RngStream rng(223);
    std::vector<double> batch_betas;
    const auto& m = std::get<LinearDgp>(spec.mode);
    for (int b = 0; b < 10; ++b) {
        const std::size_t N = 1000000;
        double sum_mu = 0, sum_l = 0;
        std::vector<double> mu(N), l10(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double s = spec.sigma_sample[rng.bounded(spec.sigma_sample.size())];
            mu[i] = spec.cond_mean(s) + std::sqrt(spec.cond_var(s)) * rng.normal();
            l10[i] = std::log10(s);
            sum_mu += mu[i];
            sum_l += l10[i];
        }
        const double mmu = sum_mu / N, ml = sum_l / N;
        double vmu = 0, cml = 0;
        for (std::size_t i = 0; i < N; ++i) {
            vmu += (mu[i] - mmu) * (mu[i] - mmu);
            cml += (mu[i] - mmu) * (l10[i] - ml);
        }
        batch_betas.push_back(m.beta_mu + m.beta_sigma * cml / vmu);
    }
    const double bm = mean(batch_betas);
    const double se = sample_sd(batch_betas) / std::sqrt(10.0);
    CHECK(std::abs(bm - truth) <= 3.0 * se);
}

TEST_CASE("simulate_linear marginals match the spec-implied moments") {
    const DgpSpec spec = smooth_spec(500);
    const auto sim = simulate_linear(spec, 100000, 17, 0);
    const auto& mu = sim.truth.mu;
    const double m = mean(mu);
    const double sd = sample_sd(mu);
    const double se_mean = sd / std::sqrt(static_cast<double>(mu.size()));
    CHECK(std::abs(m - spec.mu_mean()) <= 3.0 * se_mean);
    std::vector<double> centered_sq(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) centered_sq[i] = (mu[i] - m) * (mu[i] - m);
    const double se_var = sample_sd(centered_sq) / std::sqrt(static_cast<double>(mu.size()));
    CHECK(std::abs(sd * sd - spec.mu_var()) <= 3.0 * se_var);
}

TEST_CASE("simulate_nonlinear: tau normalization") {
    DgpSpec spec = smooth_spec(300);
    SUBCASE("median threshold gives tau0 = 2 at unit effect") {
        spec.mode = NonlinearDgp{1.0, 0.5, 1.0};
        const auto sim = simulate_nonlinear(spec, 500, 3, 0);
        CHECK(sim.tau0 == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE(".75 quantile gives tau0 = 1/sqrt(.1875)") {
        spec.mode = NonlinearDgp{1.0, 0.75, 1.0};
        const auto sim = simulate_nonlinear(spec, 500, 3, 0);
        CHECK(sim.tau0 == doctest::Approx(1.0 / std::sqrt(0.1875)).epsilon(1e-12));
        // the threshold sits at the .75 quantile of G
        const double frac_above =
            static_cast<double>(std::count_if(sim.truth.mu.begin(), sim.truth.mu.end(),
                                              [&](double v) { return v > sim.mu0; })) /
            static_cast<double>(sim.truth.mu.size());
        CHECK(frac_above == doctest::Approx(0.25).epsilon(0.35));
    }
    SUBCASE("zero effect centers every estimator at zero") {
        spec.mode = NonlinearDgp{0.0, 0.75, 1.0};
        const auto est = standard_nonlinear_mc_estimators({"oracle", "plugin"});
        std::vector<DgpSpec> cells = {spec};
        cells[0].n = 600;
        const auto mc = run_monte_carlo_nonlinear(cells, est, 60, 29, 2);
        for (const auto& ec : mc.cells[0].estimators) {
            const double se = std::sqrt(ec.variance / static_cast<double>(ec.reps_used));
            CHECK(std::abs(ec.mean) <= 3.5 * se);
        }
    }
}

TEST_CASE("monte carlo: identical estimators give identical summaries") {
    DgpSpec spec = smooth_spec(300);
    spec.n = 500;
    const std::vector<DgpSpec> cells = {with_scaled_coefficients(spec, 0.2, 0.1)};
    std::vector<LinearMcEstimator> twins = {
        {"a", [](const SimulatedLinear& s) { return classical_eiv(sample_moments(s.data)).beta; }},
        {"b", [](const SimulatedLinear& s) { return classical_eiv(sample_moments(s.data)).beta; }},
    };
    const auto mc = run_monte_carlo_linear(cells, twins, 40, 31, 2);
    const auto& a = mc.cells[0].estimators[0];
    const auto& b = mc.cells[0].estimators[1];
    CHECK(a.draws == b.draws);
    CHECK(a.mean == b.mean);
    CHECK(a.mse == b.mse);
}

TEST_CASE("monte carlo: mse decomposes into bias^2 + variance") {
    DgpSpec spec = smooth_spec(300);
    spec.n = 800;
    const std::vector<DgpSpec> cells = {with_scaled_coefficients(spec, 0.2, 0.15)};
    const auto est = standard_linear_mc_estimators({"classical", "shrinkage"});
    const auto mc = run_monte_carlo_linear(cells, est, 80, 37, 2);
    for (const auto& ec : mc.cells[0].estimators) {
        CHECK(close_rel(ec.mse, ec.bias * ec.bias + ec.variance, 1e-10));
        CHECK(ec.reps_used == 80);
    }
}

TEST_CASE("monte carlo: bit-reproducible across runs and thread counts") {
    DgpSpec spec = smooth_spec(300);
    spec.n = 400;
    const std::vector<DgpSpec> cells = {with_scaled_coefficients(spec, 0.1, 0.05),
                                        with_scaled_coefficients(spec, -0.2, 0.2)};
    const auto est = standard_linear_mc_estimators({"classical", "shrinkage"});
    const auto a = run_monte_carlo_linear(cells, est, 30, 41, 1);
    const auto b = run_monte_carlo_linear(cells, est, 30, 41, 4);
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t c = 0; c < a.cells.size(); ++c) {
        for (std::size_t e = 0; e < a.cells[c].estimators.size(); ++e) {
            CHECK(a.cells[c].estimators[e].draws == b.cells[c].estimators[e].draws);
        }
    }
}

TEST_CASE("monte carlo: both estimators consistent when precision independence holds") {
    // mu independent of sigma and beta_sigma = 0: classical and shrinkage
    // are both consistent, so the log MSE ratio stays near zero.
    DgpSpec spec = smooth_spec(400);
    std::vector<double> knots = spec.cond_mean.xs();
    spec.cond_mean = PiecewiseLinear(knots, std::vector<double>(knots.size(), 0.1));
    spec.n = 4000;
    DgpSpec cell = spec;
    std::get<LinearDgp>(cell.mode) = {1.2, 0.0, 1.0};
    const auto est = standard_linear_mc_estimators({"classical", "shrinkage"});
    const auto mc = run_monte_carlo_linear({cell}, est, 300, 43, 2);
    const double mse_cl = mc.cells[0].estimators[0].mse;
    const double mse_sh = mc.cells[0].estimators[1].mse;
    const double log_ratio = std::log(mse_sh / mse_cl);
    CHECK(log_ratio > -0.5);
    CHECK(log_ratio < 0.5);
}

TEST_CASE("monte carlo: cells with failing estimators are flagged") {
    DgpSpec spec = smooth_spec(300);
    spec.n = 300;
    const std::vector<DgpSpec> cells = {with_scaled_coefficients(spec, 0.2, 0.1)};
    const double median_x = spec.mu_mean(); // x[0] clears this about half the time
    std::vector<LinearMcEstimator> est = {
        {"fragile",
         [median_x](const SimulatedLinear& s) {
             if (s.data.x()[0] > median_x) {
                 throw EstimatorError("synthetic failure");
             }
             return 0.0;
         }},
        {"steady", [](const SimulatedLinear&) { return 1.0; }},
    };
    const auto mc = run_monte_carlo_linear(cells, est, 50, 47, 2);
    CHECK(mc.cells[0].flagged);
    CHECK(mc.cells[0].estimators[0].failures > 5);
    // counts stay equal across estimators within the cell
    CHECK(mc.cells[0].estimators[0].reps_used == mc.cells[0].estimators[1].reps_used);
}

TEST_CASE("default grid has 77 cells with the documented ranges") {
    const DgpSpec base = smooth_spec(300);
    const auto cells = default_linear_grid(base);
    CHECK(cells.size() == 77);
    const auto& first = std::get<LinearDgp>(cells.front().mode);
    CHECK(first.beta_mu * std::sqrt(base.mu_var()) == doctest::Approx(-0.3));
    const auto& last = std::get<LinearDgp>(cells.back().mode);
    CHECK(last.beta_mu * std::sqrt(base.mu_var()) == doctest::Approx(0.3));
    CHECK(last.beta_sigma * std::sqrt(base.log10sigma_var()) == doctest::Approx(0.3));
}

TEST_CASE("summary and density CSVs have the documented shapes") {
    DgpSpec spec = smooth_spec(300);
    spec.mode = NonlinearDgp{1.0, 0.75, 1.0};
    spec.n = 400;
    NpmleConfig npmle;
    npmle.grid_size = 60;
    npmle.tol = 1e-5;
    npmle.max_iter = 200;
    const auto est = standard_nonlinear_mc_estimators({"oracle", "npeb", "plugin"}, npmle);
    const auto mc = run_monte_carlo_nonlinear({spec}, est, 6, 53, 2);

    const auto dir = std::filesystem::temp_directory_path();
    const auto sum_path = (dir / "latreg_mc_summary.csv").string();
    const auto den_path = (dir / "latreg_mc_density.csv").string();
    mc.write_summary_csv(sum_path);
    mc.write_density_csv(den_path);

    std::ifstream sum(sum_path);
    std::string line;
    std::getline(sum, line);
    CHECK(line == "tau0,quantile,estimator,statistic,value");
    std::size_t rows = 0;
    while (std::getline(sum, line)) ++rows;
    CHECK(rows == 2 + 3 * 6); // true_param + flagged + 6 stats x 3 estimators

    std::ifstream den(den_path);
    std::getline(den, line);
    CHECK(line == "tau0,quantile,rep,estimator,estimate");
    rows = 0;
    while (std::getline(den, line)) ++rows;
    CHECK(rows == 6 * 3); // reps x estimators
}
