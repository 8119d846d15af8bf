#include "latreg/priors.hpp"

#include "latreg/errors.hpp"
#include "latreg/mathutil.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace latreg {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}
} // namespace

DiscretePrior DiscretePrior::make(std::vector<double> support, std::vector<double> mass) {
    if (support.size() < 1 || support.size() != mass.size()) {
        throw DataError("prior support/mass size mismatch");
    }
    double sum = 0;
    for (std::size_t k = 0; k < support.size(); ++k) {
        if (!std::isfinite(support[k])) {
            throw DataError("non-finite prior atom");
        }
        if (k > 0 && !(support[k] > support[k - 1])) {
            throw DataError("prior support must be strictly increasing");
        }
        if (!(mass[k] >= 0) || !std::isfinite(mass[k])) {
            throw DataError("prior masses must be nonnegative");
        }
        sum += mass[k];
    }
    if (std::abs(sum - 1.0) > 1e-10) {
        throw DataError("prior masses must sum to 1; got " + fmt(sum));
    }
    DiscretePrior out;
    out.support_ = std::move(support);
    out.mass_ = std::move(mass);
    return out;
}

double DiscretePrior::mean() const {
    double m = 0;
    for (std::size_t k = 0; k < support_.size(); ++k) m += mass_[k] * support_[k];
    return m;
}

double DiscretePrior::variance() const {
    const double m = mean();
    double v = 0;
    for (std::size_t k = 0; k < support_.size(); ++k) {
        v += mass_[k] * (support_[k] - m) * (support_[k] - m);
    }
    return v;
}

void save_prior_csv(const std::string& path, const DiscretePrior& prior) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    out << "support,mass\n";
    char buf[64];
    for (std::size_t k = 0; k < prior.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", prior.support()[k],
                      prior.mass()[k]);
        out << buf << '\n';
    }
}

DiscretePrior load_prior_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("empty prior file: " + path);
    }
    std::vector<double> support, mass;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        double s, m;
        if (std::sscanf(line.c_str(), "%lf,%lf", &s, &m) != 2) {
            throw DataError("cannot parse prior row " + std::to_string(row));
        }
        support.push_back(s);
        mass.push_back(m);
    }
    return DiscretePrior::make(std::move(support), std::move(mass));
}

Transform Transform::identity() {
    Transform t;
    t.kind_ = Kind::identity;
    t.bound_ = std::numeric_limits<double>::infinity();
    return t;
}

Transform Transform::indicator_above(double threshold) {
    if (!std::isfinite(threshold)) {
        throw DataError("indicator threshold must be finite");
    }
    Transform t;
    t.kind_ = Kind::indicator_above;
    t.threshold_ = threshold;
    t.bound_ = 1.0;
    return t;
}

Transform Transform::user_table(std::vector<double> xs, std::vector<double> fs,
                                double bound) {
    if (xs.size() < 2 || xs.size() != fs.size()) {
        throw DataError("user_table needs at least two (x, f(x)) knots");
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(fs[i])) {
            throw DataError("non-finite user_table knot");
        }
        if (i > 0 && !(xs[i] > xs[i - 1])) {
            throw DataError("user_table knots must be strictly increasing in x");
        }
        if (std::abs(fs[i]) > bound) {
            throw DataError("user_table value exceeds the declared bound");
        }
    }
    Transform t;
    t.kind_ = Kind::user_table;
    t.bound_ = bound;
    t.xs_ = std::move(xs);
    t.fs_ = std::move(fs);
    return t;
}

double Transform::operator()(double u) const {
    switch (kind_) {
        case Kind::identity:
            return u;
        case Kind::indicator_above:
            return u > threshold_ ? 1.0 : 0.0;
        case Kind::user_table: {
            if (u <= xs_.front()) return fs_.front();
            if (u >= xs_.back()) return fs_.back();
            const auto it = std::upper_bound(xs_.begin(), xs_.end(), u);
            const std::size_t hi = static_cast<std::size_t>(it - xs_.begin());
            const std::size_t lo = hi - 1;
            const double t = (u - xs_[lo]) / (xs_[hi] - xs_[lo]);
            return fs_[lo] + t * (fs_[hi] - fs_[lo]);
        }
    }
    return 0;
}

NpmleResult fit_npmle(const ObservationSet& data, const NpmleConfig& config) {
    if (config.grid_size < 2) {
        throw DataError("NPMLE grid_size must be at least 2");
    }
    if (config.max_iter < 0 || config.tol < 0) {
        throw DataError("NPMLE tol and max_iter must be nonnegative");
    }
    const std::size_t n = data.size();
    const int K = config.grid_size;

    double lo, hi;
    if (config.range) {
        lo = config.range->first;
        hi = config.range->second;
        if (!(lo < hi)) {
            throw DataError("NPMLE range must satisfy lo < hi");
        }
    } else {
        const auto [xmin_it, xmax_it] = std::minmax_element(data.x().begin(), data.x().end());
        const double smax = *std::max_element(data.sigma().begin(), data.sigma().end());
        lo = *xmin_it - 0.5 * smax;
        hi = *xmax_it + 0.5 * smax;
    }
    std::vector<double> support(K);
    for (int k = 0; k < K; ++k) {
        support[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(K - 1);
    }

    // Row-scaled likelihood matrix: Phi(i,k) = exp(t_ik - max_k t_ik) with
    // t_ik = -((x_i - s_k)/sigma_i)^2 / 2. The row max enters the constant,
    // so mixture sums stay in (0, K] and cannot underflow as a whole.
    Eigen::MatrixXd phi(n, K);
    double const_term = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = data.x()[i];
        const double si = data.sigma()[i];
        double rowmax = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            const double zz = (xi - support[k]) / si;
            const double t = -0.5 * zz * zz;
            phi(static_cast<Eigen::Index>(i), k) = t;
            rowmax = std::max(rowmax, t);
        }
        if (!std::isfinite(rowmax)) {
            throw EstimatorError("non-finite NPMLE likelihood at unit " +
                                 std::to_string(i + 1) + " (x=" + fmt(xi) +
                                 ", sigma=" + fmt(si) + ")");
        }
        for (int k = 0; k < K; ++k) {
            auto& cell = phi(static_cast<Eigen::Index>(i), k);
            cell = std::exp(cell - rowmax);
        }
        const_term += rowmax - std::log(si) - 0.5 * kLog2Pi;
    }

    Eigen::VectorXd mass = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
    auto loglik_of = [&](const Eigen::VectorXd& m, Eigen::VectorXd& z) {
        z.noalias() = phi * m;
        double ll = const_term;
        for (std::size_t i = 0; i < n; ++i) {
            const double zi = z(static_cast<Eigen::Index>(i));
            if (!(zi > 0) || !std::isfinite(zi)) {
                throw EstimatorError("NPMLE mixture likelihood vanished at unit " +
                                     std::to_string(i + 1));
            }
            ll += std::log(zi);
        }
        return ll;
    };

    NpmleResult result;
    Eigen::VectorXd z(n), invz(n);
    double ll = loglik_of(mass, z);
    result.loglik_history.push_back(ll);

    int iter = 0;
    while (iter < config.max_iter) {
        invz = z.cwiseInverse();
        Eigen::VectorXd weights = phi.transpose() * invz; // sum_i phi_ik / z_i
        mass = mass.cwiseProduct(weights) / static_cast<double>(n);
        mass /= mass.sum();
        ++iter;
        const double ll_new = loglik_of(mass, z);
        assert(ll_new >= ll - 1e-9 * (1.0 + std::abs(ll)) && "EM ascent violated");
        result.loglik_history.push_back(ll_new);
        const double gain = ll_new - ll;
        ll = ll_new;
        // Negative numerical gain at the fixed point also stops (except under
        // tol = 0, where only max_iter or an exactly stationary step ends it).
        if (gain < config.tol * (std::abs(ll_new) + 1.0)) {
            break;
        }
    }

    result.iterations = iter;
    result.log_likelihood = ll;
    std::vector<double> m(mass.data(), mass.data() + K);
    result.prior = DiscretePrior::make(std::move(support), std::move(m));
    return result;
}

double posterior_mean_gaussian(const GaussianPrior& prior, const Transform& f, double x,
                               double sigma) {
    if (!(sigma > 0)) {
        throw DataError("posterior_mean_gaussian requires sigma > 0");
    }
    const GaussianPosterior post = gaussian_posterior(prior, x, sigma * sigma);
    switch (f.kind()) {
        case Transform::Kind::identity:
            return post.mean;
        case Transform::Kind::indicator_above: {
            if (!(post.var > 0)) {
                return f(post.mean);
            }
            const double zz = (f.threshold() - post.mean) / std::sqrt(2.0 * post.var);
            return 0.5 * std::erfc(zz);
        }
        case Transform::Kind::user_table: {
            if (!(post.var > 0)) {
                return f(post.mean);
            }
            const GaussHermiteRule& rule = gauss_hermite_64();
            const double scale = std::sqrt(2.0 * post.var);
            double acc = 0;
            for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                acc += rule.weights[k] * f(post.mean + scale * rule.nodes[k]);
            }
            return acc / std::sqrt(3.14159265358979323846);
        }
    }
    return 0;
}

double posterior_mean_discrete(const DiscretePrior& prior, const Transform& f, double x,
                               double sigma) {
    if (!(sigma > 0)) {
        throw DataError("posterior_mean_discrete requires sigma > 0");
    }
    const std::size_t K = prior.size();
    double lwmax = -std::numeric_limits<double>::infinity();
    std::vector<double> lw(K, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < K; ++k) {
        if (prior.mass()[k] <= 0) continue;
        const double zz = (x - prior.support()[k]) / sigma;
        lw[k] = std::log(prior.mass()[k]) - 0.5 * zz * zz;
        lwmax = std::max(lwmax, lw[k]);
    }
    if (!std::isfinite(lwmax)) {
        throw EstimatorError("posterior underflow: x=" + fmt(x) + ", sigma=" + fmt(sigma) +
                             " is too far from the prior support [" +
                             fmt(prior.support().front()) + ", " +
                             fmt(prior.support().back()) + "]");
    }
    double denom = 0, numer = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (prior.mass()[k] <= 0) continue;
        const double r = std::exp(lw[k] - lwmax);
        denom += r;
        numer += r * f(prior.support()[k]);
    }
    return numer / denom;
}

} // namespace latreg
