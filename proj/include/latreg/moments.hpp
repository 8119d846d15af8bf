#pragma once

#include "latreg/data.hpp"

#include <span>

namespace latreg {

// Sample moments in the 1/n (population-analogue) convention:
// E_n[W] = (1/n) sum W_i, var_n(W) = E_n[W^2] - E_n[W]^2. Weighted moments
// use normalized weights W_i = w_i / sum(w). The divisor choice matters: the
// classical estimator's finite-sample value depends on it.
struct MomentSummary {
    double mean_y = 0;
    double mean_x = 0;
    double var_y = 0;
    double var_x = 0;
    double cov_xy = 0;
    double mean_sigma2 = 0;
    std::size_t n = 0;
    bool weighted = false;
};

/// Unweighted 1/n moments. Identical code path to weighted_moments with a
/// unit weight vector, so the two agree bit-for-bit apart from the flag.
MomentSummary sample_moments(const ObservationSet& data);

/// Moments under normalized weights. Throws DataError if weights are
/// negative, non-finite, or sum to zero.
MomentSummary weighted_moments(const ObservationSet& data, std::span<const double> weights);

/// Frisch-Waugh-Lovell partialling: residualizes y and x on [1, Z] (weighted
/// projection when the data carry non-unit weights) and returns them with the
/// original sigma and weights; covariates are consumed. Rank-deficient
/// designs are reported naming the collinear columns. The projection uses a
/// rank-revealing column-pivoted QR with relative pivot threshold 1e-12.
ObservationSet partial_out(const ObservationSet& data);

} // namespace latreg
