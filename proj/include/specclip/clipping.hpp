#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "specclip/matrix.hpp"
#include "specclip/svd.hpp"
#include "specclip/threshold.hpp"

namespace specclip {

/// Outcome of one clip. `rank_used` is empty for the full-SVD and norm paths.
/// `sigma_max_pre` is NaN when the clipper had no reason to compute it.
struct ClipReport {
    Matrix clipped;
    double tau = kInf;
    double sigma_max_pre = std::numeric_limits<double>::quiet_NaN();
    double sigma_max_post = std::numeric_limits<double>::quiet_NaN();
    std::size_t num_clamped = 0;
    std::optional<std::size_t> rank_used;
};

inline void require_positive_tau(double tau, const char* who) {
    if (!(tau > 0.0)) throw std::invalid_argument(std::string(who) + ": tau must be positive");
}

/// min(1, tau/||g||_F) * g; the zero matrix is returned as is.
inline Matrix clip_norm(const Matrix& g, double tau) {
    require_positive_tau(tau, "clip_norm");
    const double nrm = frobenius_norm(g);
    if (nrm <= tau) return g;
    return (tau / nrm) * g;
}

namespace detail {

// G - sum_i (sigma_i - clamp(sigma_i)) u_i v_i^T over the clamped indices.
inline std::size_t subtract_excess(Matrix& g, const SvdFactors& f, double tau) {
    std::size_t clamped = 0;
    for (std::size_t k = 0; k < f.sigma.size(); ++k) {
        const double extra = f.sigma[k] - std::min(f.sigma[k], tau);
        if (extra <= 0.0) continue;
        ++clamped;
        for (std::size_t i = 0; i < g.rows(); ++i) {
            const double ui = extra * f.U(i, k);
            if (ui == 0.0) continue;
            auto gi = g.row(i);
            for (std::size_t j = 0; j < gi.size(); ++j) gi[j] -= ui * f.V(j, k);
        }
    }
    return clamped;
}

}  // namespace detail

/// Spectral clipping with a full SVD: every singular value above tau is set
/// to tau; singular directions are kept.
inline ClipReport clip_spectral_exact(const Matrix& g, double tau) {
    require_positive_tau(tau, "clip_spectral_exact");
    const SvdFactors f = svd_full(g);
    ClipReport r;
    r.tau = tau;
    r.sigma_max_pre = f.sigma.front();
    r.sigma_max_post = std::min(r.sigma_max_pre, tau);
    r.clipped = g;
    r.num_clamped = detail::subtract_excess(r.clipped, f, tau);
    return r;
}

/// Spectral clipping of the top `opts.rank` singular values from a randomized
/// truncated SVD; the complement of the sketched subspace passes through.
inline ClipReport clip_spectral_truncated(const Matrix& g, double tau, const TruncatedSvdOptions& opts, Rng rng) {
    require_positive_tau(tau, "clip_spectral_truncated");
    const SvdFactors f = svd_truncated(g, opts, rng);
    ClipReport r;
    r.tau = tau;
    r.sigma_max_pre = f.sigma.front();
    r.sigma_max_post = std::min(r.sigma_max_pre, tau);
    r.rank_used = opts.rank;
    r.clipped = g;
    r.num_clamped = detail::subtract_excess(r.clipped, f, tau);
    return r;
}

}  // namespace specclip
