#include "latreg/errors.hpp"
#include "latreg/linear.hpp"
#include "latreg/moments.hpp"
#include "latreg/rng.hpp"

#include <doctest.h>

#include "test_util.hpp"

#include <cmath>
#include <cstring>

using namespace latreg;
using latreg::testing::close_rel;
using latreg::testing::three_row_example;

TEST_CASE("classical estimator on the 3-row example") {
    const auto m = sample_moments(three_row_example());
    const auto e = classical_eiv(m);
    // cov/ (var - E sigma^2) = (2/3)/(2/3 - 1/2) = 4
    CHECK(e.beta == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(e.intercept == doctest::Approx(1.0 - 4.0 * 1.0).epsilon(1e-12));
    CHECK(*e.naive_slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*e.inflation_factor == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("classical with zero measurement error reduces to OLS") {
    MomentSummary m = sample_moments(three_row_example());
    m.mean_sigma2 = 0.0; // sigma == 0 admitted at the moment level
    const auto e = classical_eiv(m);
    CHECK(e.beta == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("classical errors out at the identification boundary") {
    MomentSummary m = sample_moments(three_row_example());
    m.mean_sigma2 = m.var_x; // var_n(X) == E_n[sigma^2]
    CHECK_THROWS_AS(classical_eiv(m), EstimatorError);
    m.mean_sigma2 = m.var_x * 2.0;
    CHECK_THROWS_AS(classical_eiv(m), EstimatorError);
}

TEST_CASE("gaussian prior fit") {
    const auto m = sample_moments(three_row_example());
    const auto prior = fit_gaussian_prior(m);
    CHECK(prior.mu == doctest::Approx(1.0));
    CHECK(prior.sigma_mu2 == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK_FALSE(prior.floored);

    SUBCASE("flooring kicks in when var_x < E sigma^2") {
        MomentSummary bad = m;
        bad.mean_sigma2 = 1.0;
        const auto floored = fit_gaussian_prior(bad);
        CHECK(floored.floored);
        CHECK(floored.sigma_mu2 == doctest::Approx(1e-12 * bad.var_x));
    }
    SUBCASE("sigma == 0 gives the raw variance") {
        MomentSummary noiseless = m;
        noiseless.mean_sigma2 = 0.0;
        const auto p = fit_gaussian_prior(noiseless);
        CHECK(p.sigma_mu2 == doctest::Approx(m.var_x));
    }
    SUBCASE("y-moment mode feeds the prior from the outcome") {
        const auto d = ObservationSet::make({0, 2, 7}, {0, 1, 2},
                                            {std::sqrt(0.5), std::sqrt(0.5), std::sqrt(0.5)});
        const auto mm = sample_moments(d);
        const auto p = fit_gaussian_prior(mm, PriorMomentSource::y_moments);
        CHECK(p.mu == doctest::Approx(3.0));
        CHECK(p.sigma_mu2 == doctest::Approx(26.0 / 3.0 - 0.5).epsilon(1e-12));
    }
}

TEST_CASE("linear shrinkage values") {
    SUBCASE("equal prior and noise variance averages") {
        GaussianPrior prior{0.0, 1.0, false};
        const auto d = ObservationSet::make({0, 0, 0}, {2, 2, 2}, {1, 1, 1});
        const auto pm = linear_shrinkage(d, prior);
        CHECK(pm[0] == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("vanishing noise returns the measurement") {
        GaussianPrior prior{0.0, 1.0, false};
        const double s = 1e-6; // sigma^2 = 1e-12
        const auto d = ObservationSet::make({0, 0, 0}, {2, 2, 2}, {s, s, s});
        const auto pm = linear_shrinkage(d, prior);
        CHECK(pm[0] == doctest::Approx(2.0).epsilon(1e-10));
    }
    SUBCASE("hand-computed weight 1/4") {
        GaussianPrior prior{1.0, 1.0 / 6.0, false};
        const double s = std::sqrt(0.5);
        const auto d = ObservationSet::make({0, 0, 0}, {2, 2, 2}, {s, s, s});
        const auto pm = linear_shrinkage(d, prior);
        CHECK(pm[0] == doctest::Approx(1.25).epsilon(1e-13));
    }
    SUBCASE("posterior mean lies between prior mean and measurement") {
        RngStream rng(23);
        GaussianPrior prior{0.4, 0.8, false};
        for (int i = 0; i < 50; ++i) {
            const double x = 4.0 * rng.normal();
            const double s = 0.1 + 2.0 * rng.uniform01();
            const auto d = ObservationSet::make({0, 0, 0}, {x, x, x}, {s, s, s});
            const double pm = linear_shrinkage(d, prior)[0];
            CHECK(pm >= std::min(prior.mu, x) - 1e-12);
            CHECK(pm <= std::max(prior.mu, x) + 1e-12);
        }
    }
}

TEST_CASE("regress-on-shrinkage equals classical under homoskedasticity") {
    const auto data = three_row_example();
    const auto m = sample_moments(data);
    const auto prior = fit_gaussian_prior(m);
    const auto pm = linear_shrinkage(data, prior);
    const auto shr = regress_on_shrinkage(data, pm);
    const auto cls = classical_eiv(m);
    CHECK(shr.beta == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(shr.beta - cls.beta) <= 1e-10 * std::max(1.0, std::abs(cls.beta)));
}

TEST_CASE("regress-on-shrinkage degenerate and reduction cases") {
    const auto data = three_row_example();
    SUBCASE("constant shrunk regressor errors") {
        const std::vector<double> flat(3, 0.7);
        CHECK_THROWS_AS(regress_on_shrinkage(data, flat), EstimatorError);
    }
    SUBCASE("zero shrinkage reduces to naive OLS") {
        const auto shr = regress_on_shrinkage(data, data.x());
        const auto ols = naive_ols(sample_moments(data));
        CHECK(shr.beta == doctest::Approx(ols.beta).epsilon(1e-14));
    }
}

TEST_CASE("homoskedastic identity on random datasets") {
    RngStream rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 50 + rng.bounded(451);
        const double sigma = 0.2 + 0.6 * rng.uniform01();
        std::vector<double> y(n), x(n), s(n, sigma);
        for (std::size_t i = 0; i < n; ++i) {
            const double mu = rng.normal();
            x[i] = mu + sigma * rng.normal();
            y[i] = 0.5 + 1.7 * mu + rng.normal();
        }
        const auto data = ObservationSet::make(y, x, s);
        const auto m = sample_moments(data);
        if (!(m.var_x - m.mean_sigma2 > 1e-3)) continue; // stay off the boundary
        const auto cls = classical_eiv(m);
        const auto pm = linear_shrinkage(data, fit_gaussian_prior(m));
        const auto shr = regress_on_shrinkage(data, pm);
        CHECK(std::abs(shr.beta - cls.beta) <= 1e-10 * std::max(1.0, std::abs(cls.beta)));
    }
}

TEST_CASE("weighted classical reduces to classical under unit weights") {
    const auto data = three_row_example();
    const std::vector<double> ones(3, 1.0);
    const auto w = weighted_classical_eiv(data, ones);
    const auto c = classical_eiv(sample_moments(data));
    CHECK(w.beta == doctest::Approx(c.beta).epsilon(1e-15));
    CHECK(w.intercept == doctest::Approx(c.intercept).epsilon(1e-15));
}

TEST_CASE("weighted classical matches integer-weight row duplication") {
    RngStream rng(37);
    const std::size_t n = 40;
    std::vector<double> y(n), x(n), s(n), w(n);
    std::vector<double> yd, xd, sd;
    for (std::size_t i = 0; i < n; ++i) {
        const double mu = rng.normal();
        s[i] = 0.3 + 0.5 * rng.uniform01();
        x[i] = mu + s[i] * rng.normal();
        y[i] = 2.0 * mu + rng.normal();
        w[i] = 1.0 + static_cast<double>(rng.bounded(4));
        for (int r = 0; r < static_cast<int>(w[i]); ++r) {
            yd.push_back(y[i]);
            xd.push_back(x[i]);
            sd.push_back(s[i]);
        }
    }
    const auto weighted = weighted_classical_eiv(ObservationSet::make(y, x, s), w);
    const auto duplicated = classical_eiv(sample_moments(ObservationSet::make(yd, xd, sd)));
    CHECK(close_rel(weighted.beta, duplicated.beta, 1e-12));
}

TEST_CASE("weighted classical rejects a nonpositive denominator") {
    const double s = 2.0;
    const auto data = ObservationSet::make({0, 1, 2}, {0, 1, 2}, {s, s, s});
    const std::vector<double> ones(3, 1.0);
    CHECK_THROWS_AS(weighted_classical_eiv(data, ones), EstimatorError);
}

TEST_CASE("two-sided correction") {
    RngStream rng(41);
    const auto grouped = latreg::testing::random_grouped(rng, 40, 6, false);
    const auto agg = aggregate(grouped);
    const auto cov12 = estimate_cov12(grouped);

    SUBCASE("zero cov12 is bit-identical to weighted classical") {
        const std::vector<double> zeros(agg.size(), 0.0);
        const auto a = two_sided_corrected(agg, agg.weight(), zeros);
        const auto b = weighted_classical_eiv(agg, agg.weight());
        CHECK(std::memcmp(&a.beta, &b.beta, sizeof(double)) == 0);
        CHECK(std::memcmp(&a.intercept, &b.intercept, sizeof(double)) == 0);
    }
    SUBCASE("cov12 forcing the numerator to zero forces beta to zero") {
        const auto m = weighted_moments(agg, agg.weight());
        // put the whole weighted covariance into a constant cov12
        const std::vector<double> c(agg.size(), m.cov_xy);
        const auto e = two_sided_corrected(agg, agg.weight(), c);
        CHECK(e.beta == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("non-finite cov12 rejected") {
        std::vector<double> c(agg.size(), 0.0);
        c[0] = NAN;
        CHECK_THROWS_AS(two_sided_corrected(agg, agg.weight(), c), DataError);
    }
}

TEST_CASE("two-sided correction removes the bivariate-noise bias") {
    // DGP with correlated noise on both sides: X_ij = mu + e, Y_ij = 2 mu +
    // 0.8 e + u. The one-sided weighted estimator's population limit is
    // beta0 + c sigma_e^2 / (N var mu) = 2 + 0.16; the two-sided correction
    // removes it.
    RngStream rng(43);
    const int reps = 200;
    const std::size_t G = 300, N = 5;
    std::vector<double> corrected, onesided;
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<Group> groups(G);
        for (std::size_t g = 0; g < G; ++g) {
            const double mu = rng.normal();
            Group grp;
            grp.id = std::to_string(g);
            for (std::size_t j = 0; j < N; ++j) {
                const double e = rng.normal();
                grp.x.push_back(mu + e);
                grp.y.push_back(2.0 * mu + 0.8 * e + rng.normal());
            }
            groups[g] = std::move(grp);
        }
        const auto grouped = GroupedData::make(std::move(groups));
        const auto agg = aggregate(grouped);
        const auto cov12 = estimate_cov12(grouped);
        corrected.push_back(two_sided_corrected(agg, agg.weight(), cov12).beta);
        onesided.push_back(weighted_classical_eiv(agg, agg.weight()).beta);
    }
    auto mean_se = [&](const std::vector<double>& v) {
        double m = 0;
        for (double d : v) m += d;
        m /= v.size();
        double var = 0;
        for (double d : v) var += (d - m) * (d - m);
        return std::pair<double, double>(m, std::sqrt(var / (v.size() - 1.0) / v.size()));
    };
    const auto [mc, sec] = mean_se(corrected);
    const auto [mo, seo] = mean_se(onesided);
    CHECK(std::abs(mc - 2.0) <= 3.0 * sec);
    CHECK(std::abs(mo - 2.16) <= 3.0 * seo);
    CHECK(std::abs(mo - 2.0) > 5.0 * seo); // the uncorrected bias is real
}

TEST_CASE("estimate_cov12 hand-computed and null cases") {
    SUBCASE("y == x with values (0,2): within-cov 2, normalized 1") {
        std::vector<Group> groups(1);
        groups[0] = {"a", {0, 2}, {0, 2}, std::nullopt};
        const auto c = estimate_cov12(GroupedData::make(groups));
        CHECK(c[0] == doctest::Approx(1.0));
    }
    SUBCASE("constant y gives 0") {
        std::vector<Group> groups(1);
        groups[0] = {"a", {3, 3, 3}, {0, 1, 2}, std::nullopt};
        const auto c = estimate_cov12(GroupedData::make(groups));
        CHECK(c[0] == doctest::Approx(0.0));
    }
    SUBCASE("independent y and x average to zero across many groups") {
        RngStream rng(47);
        std::vector<Group> groups(600);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            Group grp;
            grp.id = std::to_string(g);
            for (int j = 0; j < 4; ++j) {
                grp.x.push_back(rng.normal());
                grp.y.push_back(rng.normal());
            }
            groups[g] = std::move(grp);
        }
        const auto c = estimate_cov12(GroupedData::make(groups));
        double m = 0;
        for (double v : c) m += v;
        m /= static_cast<double>(c.size());
        double var = 0;
        for (double v : c) var += (v - m) * (v - m);
        const double se = std::sqrt(var / (c.size() - 1.0) / static_cast<double>(c.size()));
        CHECK(std::abs(m) <= 3.0 * se);
    }
}

TEST_CASE("loo_iv and debiased_moment: hand-solved 2x2 system") {
    // Teachers A: (y,x) = (1,0),(2,2); B: (4,1),(3,3).
    // Leave-one-out instrument solves [4,6;6,6] theta = (10,17):
    // intercept 3.5, slope -2/3. The debiased-moment route solves the same
    // system through the group-level debiasing formulas.
    std::vector<Group> groups(2);
    groups[0] = {"A", {1, 2}, {0, 2}, std::nullopt};
    groups[1] = {"B", {4, 3}, {1, 3}, std::nullopt};
    const auto grouped = GroupedData::make(groups);
    for (const auto& e : {loo_iv(grouped), debiased_moment(grouped)}) {
        CHECK(e.beta == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
        CHECK(e.intercept == doctest::Approx(3.5).epsilon(1e-12));
    }
}

TEST_CASE("degenerate instrument reduces both routes to student-level OLS") {
    std::vector<Group> groups(2);
    groups[0] = {"A", {0, 2}, {1, 1}, std::nullopt};
    groups[1] = {"B", {1, 5}, {3, 3}, std::nullopt};
    const auto grouped = GroupedData::make(groups);
    // student-level OLS: slope 1, intercept 0 (hand-computed)
    for (const auto& e : {loo_iv(grouped), debiased_moment(grouped)}) {
        CHECK(e.beta == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(e.intercept == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("loo_iv: zero first stage errors") {
    // x constant everywhere: the instrument carries no information and the
    // moment system is singular.
    std::vector<Group> groups(2);
    groups[0] = {"A", {0, 1}, {1, 1}, std::nullopt};
    groups[1] = {"B", {1, 0}, {1, 1}, std::nullopt};
    CHECK_THROWS_AS(loo_iv(GroupedData::make(groups)), EstimatorError);
    CHECK_THROWS_AS(debiased_moment(GroupedData::make(groups)), EstimatorError);
}

TEST_CASE("Devereux equivalence on random grouped data") {
    RngStream rng(53);
    for (int rep = 0; rep < 30; ++rep) {
        const bool covs = rep % 2 == 0;
        const auto grouped =
            latreg::testing::random_grouped(rng, 5 + rng.bounded(30), 7, covs);
        const auto iv = loo_iv(grouped);
        const auto dm = debiased_moment(grouped);
        CHECK(close_rel(iv.beta, dm.beta, 1e-8));
        CHECK(close_rel(iv.intercept, dm.intercept, 1e-8));
        if (covs) {
            REQUIRE(iv.covariate_coefs);
            REQUIRE(dm.covariate_coefs);
            for (Eigen::Index k = 0; k < iv.covariate_coefs->size(); ++k) {
                CHECK(close_rel((*iv.covariate_coefs)(k), (*dm.covariate_coefs)(k), 1e-8));
            }
        }
    }
}

TEST_CASE("affine equivariance: rescaling x and sigma rescales beta") {
    RngStream rng(59);
    const auto data = latreg::testing::random_obs(rng, 300);
    const double c = 3.0;
    std::vector<double> xc(data.size()), sc(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        xc[i] = c * data.x()[i];
        sc[i] = c * data.sigma()[i];
    }
    const auto scaled = ObservationSet::make(data.y(), xc, sc);

    const auto b1 = classical_eiv(sample_moments(data));
    const auto b2 = classical_eiv(sample_moments(scaled));
    CHECK(close_rel(b2.beta, b1.beta / c, 1e-10));

    const auto pm1 = linear_shrinkage(data, fit_gaussian_prior(sample_moments(data)));
    const auto pm2 = linear_shrinkage(scaled, fit_gaussian_prior(sample_moments(scaled)));
    const auto s1 = regress_on_shrinkage(data, pm1);
    const auto s2 = regress_on_shrinkage(scaled, pm2);
    CHECK(close_rel(s2.beta, s1.beta / c, 1e-10));
}

TEST_CASE("classical estimator converges at the root-n rate") {
    // Dispersion of beta-hat across replications should scale like
    // n^{-1/2}: the log-log slope over n = 1e3, 1e4, 1e5 lies in [-.6, -.4].
    RngStream rng(61);
    const int reps = 150;
    const std::vector<std::size_t> sizes = {1000, 10000, 100000};
    std::vector<double> log_sd;
    for (std::size_t n : sizes) {
        std::vector<double> draws;
        for (int rep = 0; rep < reps; ++rep) {
            std::vector<double> y(n), x(n), s(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double mu = rng.normal();
                s[i] = 0.4 + 0.4 * rng.uniform01();
                x[i] = mu + s[i] * rng.normal();
                y[i] = 1.2 * mu + rng.normal();
            }
            draws.push_back(
                classical_eiv(sample_moments(ObservationSet::make(y, x, s))).beta);
        }
        double m = 0;
        for (double d : draws) m += d;
        m /= reps;
        double var = 0;
        for (double d : draws) var += (d - m) * (d - m);
        log_sd.push_back(0.5 * std::log(var / (reps - 1.0)));
    }
    // least-squares slope of log sd on log n
    double mx = 0, my = 0;
    std::vector<double> lx;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        lx.push_back(std::log(static_cast<double>(sizes[k])));
        mx += lx.back();
        my += log_sd[k];
    }
    mx /= 3.0;
    my /= 3.0;
    double num = 0, den = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        num += (lx[k] - mx) * (log_sd[k] - my);
        den += (lx[k] - mx) * (lx[k] - mx);
    }
    const double slope = num / den;
    CHECK(slope > -0.6);
    CHECK(slope < -0.4);
}
