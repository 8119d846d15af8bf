#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace latreg {

/// Standard normal CDF, evaluated through erfc for accurate tails.
double normal_cdf(double z);

/// Standard normal quantile (Acklam's rational approximation, |err| < 1.2e-9,
/// refined by one Halley step). p must lie in (0, 1).
double normal_quantile(double p);

/// Sample quantile with linear interpolation between order statistics
/// (R type 7). `sorted` must be ascending and non-empty; p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);

double mean(std::span<const double> v);

/// Standard deviation with divisor n-1 (n >= 2).
double sample_sd(std::span<const double> v);

/// FNV-1a 64-bit content hash, hex-encoded. Stable fingerprint for input
/// provenance in reports; not cryptographic.
std::string fnv1a_hex(std::span<const char> bytes);
std::string file_digest(const std::string& path);

/// Gauss-Hermite nodes/weights for integrals of the form
/// integral f(t) exp(-t^2) dt ~ sum w_i f(t_i), computed by Golub-Welsch.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite_64();
GaussHermiteRule gauss_hermite(int n);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots; the first exception thrown by any body is
/// rethrown after all workers join. threads <= 1 runs inline.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

} // namespace latreg
