#include "latreg/moments.hpp"

#include "latreg/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace latreg {

namespace {

// Single code path for both entry points: normalized-weight two-pass central
// moments. With a unit weight vector this computes the unweighted 1/n
// convention term for term, which is what makes sample_moments and
// weighted_moments(data, ones) agree bit-for-bit.
MomentSummary core_moments(const ObservationSet& data, std::span<const double> w,
                           bool weighted_flag) {
    const std::size_t n = data.size();
    if (w.size() != n) {
        throw DataError("weight vector length mismatch");
    }
    double sw = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(w[i] >= 0) || !std::isfinite(w[i])) {
            throw DataError("weights must be finite and nonnegative; bad weight at row " +
                            std::to_string(i + 1));
        }
        sw += w[i];
    }
    if (!(sw > 0)) {
        throw DataError("weights sum to zero");
    }
    MomentSummary m;
    m.n = n;
    m.weighted = weighted_flag;
    double sy = 0, sx = 0, ss2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sy += w[i] * data.y()[i];
        sx += w[i] * data.x()[i];
        ss2 += w[i] * data.sigma()[i] * data.sigma()[i];
    }
    m.mean_y = sy / sw;
    m.mean_x = sx / sw;
    m.mean_sigma2 = ss2 / sw;
    double vy = 0, vx = 0, cxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dy = data.y()[i] - m.mean_y;
        const double dx = data.x()[i] - m.mean_x;
        vy += w[i] * dy * dy;
        vx += w[i] * dx * dx;
        cxy += w[i] * dx * dy;
    }
    m.var_y = vy / sw;
    m.var_x = vx / sw;
    m.cov_xy = cxy / sw;
    return m;
}

} // namespace

MomentSummary sample_moments(const ObservationSet& data) {
    const std::vector<double> ones(data.size(), 1.0);
    return core_moments(data, ones, false);
}

MomentSummary weighted_moments(const ObservationSet& data, std::span<const double> weights) {
    return core_moments(data, weights, true);
}

ObservationSet partial_out(const ObservationSet& data) {
    if (!data.has_covariates()) {
        throw DataError("partial_out requires covariates");
    }
    const std::size_t n = data.size();
    const Eigen::Index q = data.covariates().cols();
    Eigen::MatrixXd design(n, q + 1);
    design.col(0).setOnes();
    design.rightCols(q) = data.covariates();

    // Weighted projection when weights are present: scale rows by sqrt(w).
    Eigen::VectorXd sqw = Eigen::VectorXd::Ones(n);
    if (!data.unit_weights()) {
        for (std::size_t i = 0; i < n; ++i) {
            sqw(static_cast<Eigen::Index>(i)) = std::sqrt(data.weight()[i]);
        }
    }
    const Eigen::MatrixXd scaled = sqw.asDiagonal() * design;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(1e-12);
    if (qr.rank() < design.cols()) {
        // The pivot order puts dependent columns last; name them.
        std::string cols;
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < design.cols(); ++k) {
            if (!cols.empty()) cols += ", ";
            const Eigen::Index orig = perm(k);
            cols += orig == 0 ? std::string("intercept")
                              : "z[" + std::to_string(orig - 1) + "]";
        }
        throw DataError("rank-deficient controls; collinear columns: " + cols);
    }

    auto residualize = [&](const std::vector<double>& v) {
        Eigen::VectorXd target(n);
        for (std::size_t i = 0; i < n; ++i) {
            target(static_cast<Eigen::Index>(i)) = v[i];
        }
        const Eigen::VectorXd coef = qr.solve(sqw.asDiagonal() * target);
        const Eigen::VectorXd resid = target - design * coef;
        return std::vector<double>(resid.data(), resid.data() + n);
    };

    std::vector<double> y_res = residualize(data.y());
    std::vector<double> x_res = residualize(data.x());
    return ObservationSet::make(std::move(y_res), std::move(x_res), data.sigma(),
                                data.unit_weights() ? std::vector<double>{} : data.weight(),
                                std::nullopt);
}

} // namespace latreg
