#pragma once

// Singular value decompositions: a one-sided Jacobi kernel for the full thin
// SVD and a randomized sketch (Halko, Martinsson & Tropp) for rank-r
// truncations, plus the clamp primitive and norms built on top of them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "specclip/matrix.hpp"
#include "specclip/rng.hpp"

namespace specclip {

class SvdConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SvdFactors {
    Matrix U;                   // m x k, orthonormal columns
    std::vector<double> sigma;  // k values, descending
    Matrix V;                   // n x k, orthonormal columns
    std::optional<std::size_t> truncated_rank;

    [[nodiscard]] std::size_t rank() const { return sigma.size(); }
    [[nodiscard]] bool truncated() const { return truncated_rank.has_value(); }
};

struct JacobiOptions {
    int max_sweeps = 60;
    double tolerance = 1e-14;
};

namespace detail {

// Column-major scratch: `count` vectors of length `len`.
struct ColumnSet {
    std::size_t len = 0;
    std::size_t count = 0;
    std::vector<double> data;

    ColumnSet(std::size_t l, std::size_t c) : len{l}, count{c}, data(l * c, 0.0) {}
    std::span<double> col(std::size_t j) { return {data.data() + j * len, len}; }
    [[nodiscard]] std::span<const double> col(std::size_t j) const { return {data.data() + j * len, len}; }
};

inline void scale(std::span<double> v, double s) {
    for (double& x : v) x *= s;
}

inline void subtract_projection(std::span<double> v, std::span<const double> q) {
    const double c = dot(v, q);
    const auto n = static_cast<Eigen::Index>(v.size());
    Eigen::Map<Eigen::VectorXd>(v.data(), n) -= c * Eigen::Map<const Eigen::VectorXd>(q.data(), n);
}

// Orthonormalize `v` against the first `done` columns of `basis` with one
// reorthogonalization pass. Returns the norm left after projection.
inline double orthogonalize_against(std::span<double> v, const ColumnSet& basis, std::size_t done) {
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t j = 0; j < done; ++j) subtract_projection(v, basis.col(j));
    return std::sqrt(dot(v, v));
}

// Replace column `j` by a unit vector orthogonal to columns [0, j). Walks the
// standard basis, keeping the candidate with the largest residual.
inline void complete_column(ColumnSet& basis, std::size_t j) {
    std::vector<double> best;
    double best_norm = -1.0;
    std::vector<double> cand(basis.len);
    for (std::size_t e = 0; e < basis.len; ++e) {
        std::fill(cand.begin(), cand.end(), 0.0);
        cand[e] = 1.0;
        const double nrm = orthogonalize_against(cand, basis, j);
        if (nrm > best_norm) {
            best_norm = nrm;
            best = cand;
        }
        if (best_norm > 0.5) break;
    }
    auto out = basis.col(j);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = best[i] / best_norm;
}

inline double jacobi_tolerance(const JacobiOptions& opts, std::size_t len) {
    return std::max(opts.tolerance, static_cast<double>(len) * std::numeric_limits<double>::epsilon());
}

// One-sided Jacobi on a tall matrix (m >= n) given as n columns.
inline SvdFactors jacobi_tall(ColumnSet work, const JacobiOptions& opts) {
    const std::size_t m = work.len;
    const std::size_t n = work.count;
    ColumnSet v(n, n);
    for (std::size_t j = 0; j < n; ++j) v.col(j)[j] = 1.0;

    const double tol = jacobi_tolerance(opts, m);
    bool converged = n < 2;
    for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto wp = work.col(p);
                auto wq = work.col(q);
                const double alpha = dot(wp, wp);
                const double beta = dot(wq, wq);
                const double gamma = dot(wp, wq);
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double a = wp[i];
                    const double b = wq[i];
                    wp[i] = c * a - s * b;
                    wq[i] = s * a + c * b;
                }
                auto vp = v.col(p);
                auto vq = v.col(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double a = vp[i];
                    const double b = vq[i];
                    vp[i] = c * a - s * b;
                    vq[i] = s * a + c * b;
                }
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw SvdConvergenceError("svd_full: Jacobi iteration limit (" + std::to_string(opts.max_sweeps) +
                                  " sweeps) exceeded for " + std::to_string(m) + "x" + std::to_string(n) +
                                  " input");
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(work.col(j), work.col(j)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    ColumnSet u(m, n);
    ColumnSet vs(n, n);
    SvdFactors out;
    out.sigma.resize(n);
    std::vector<std::size_t> empty;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.sigma[k] = norms[src];
        std::copy_n(v.col(src).begin(), n, vs.col(k).begin());
        if (norms[src] > 0.0) {
            std::copy_n(work.col(src).begin(), m, u.col(k).begin());
            scale(u.col(k), 1.0 / norms[src]);
        } else {
            empty.push_back(k);
        }
    }
    for (std::size_t k : empty) {
        // Zero columns trail the nonzero ones after sorting, so every
        // column before k is already final.
        complete_column(u, k);
    }

    out.U = Matrix(m, n);
    out.V = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < m; ++i) out.U(i, k) = u.col(k)[i];
        for (std::size_t i = 0; i < n; ++i) out.V(i, k) = vs.col(k)[i];
    }
    return out;
}

}  // namespace detail

/// Flip each singular pair so the largest-magnitude entry of the U column is
/// positive (first such entry on ties).
inline void normalize_signs(SvdFactors& f) {
    for (std::size_t k = 0; k < f.U.cols(); ++k) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < f.U.rows(); ++i) {
            if (std::abs(f.U(i, k)) > best) {
                best = std::abs(f.U(i, k));
                arg = i;
            }
        }
        if (f.U(arg, k) < 0.0) {
            for (std::size_t i = 0; i < f.U.rows(); ++i) f.U(i, k) = -f.U(i, k);
            for (std::size_t i = 0; i < f.V.rows(); ++i) f.V(i, k) = -f.V(i, k);
        }
    }
}

/// Thin SVD with k = min(m, n). Throws SvdConvergenceError when the Jacobi
/// sweep cap is hit.
inline SvdFactors svd_full(const Matrix& g, const JacobiOptions& opts = {}) {
    if (g.rows() == 0 || g.cols() == 0) throw ShapeError("svd_full: empty matrix");
    const bool tall = g.rows() >= g.cols();
    const std::size_t len = tall ? g.rows() : g.cols();
    const std::size_t count = tall ? g.cols() : g.rows();
    detail::ColumnSet work(len, count);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
            if (tall) work.col(j)[i] = g(i, j);
            else work.col(i)[j] = g(i, j);
        }
    }
    SvdFactors f;
    if (count >= 2 && len >= 2 * count) {
        // Strongly rectangular: rotate the small triangular factor of a
        // Householder QR instead of the long columns, then map U back.
        Eigen::Map<const Eigen::MatrixXd> a(work.data.data(), static_cast<Eigen::Index>(len),
                                            static_cast<Eigen::Index>(count));
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        const Eigen::MatrixXd r = qr.matrixQR().topRows(static_cast<Eigen::Index>(count)).triangularView<Eigen::Upper>();
        detail::ColumnSet small(count, count);
        std::copy_n(r.data(), count * count, small.data.begin());
        f = detail::jacobi_tall(std::move(small), opts);
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(len),
                                                                              static_cast<Eigen::Index>(count));
        Matrix q_rm(len, count);
        detail::view(q_rm) = q;
        f.U = matmul(q_rm, f.U);
    } else {
        f = detail::jacobi_tall(std::move(work), opts);
    }
    if (!tall) std::swap(f.U, f.V);
    normalize_signs(f);
    return f;
}

/// U diag(sigma) V^T
inline Matrix reconstruct(const Matrix& u, std::span<const double> sigma, const Matrix& v) {
    Matrix us = u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t k = 0; k < sigma.size(); ++k) us(i, k) *= sigma[k];
    return matmul_nt(us, v);
}

inline Matrix reconstruct(const SvdFactors& f) { return reconstruct(f.U, f.sigma, f.V); }

struct TruncatedSvdOptions {
    std::size_t rank = 10;
    std::size_t power_iters = 1;
    std::size_t oversample = 5;
};

namespace detail {

// Orthonormalize the rows of `rows` in place (Gram-Schmidt, two passes).
// Rows that collapse numerically are replaced by fresh Gaussian directions
// so the result always has orthonormal rows.
inline void orthonormalize_rows(Matrix& rows, Rng& rng) {
    const std::size_t count = rows.rows();
    const std::size_t len = rows.cols();
    for (std::size_t j = 0; j < count; ++j) {
        auto vj = rows.row(j);
        for (int attempt = 0;; ++attempt) {
            const double before = std::sqrt(dot(vj, vj));
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t i = 0; i < j; ++i) subtract_projection(vj, rows.row(i));
            const double after = std::sqrt(dot(vj, vj));
            if (after > 0.0 && after > 1e-12 * before) {
                scale(vj, 1.0 / after);
                break;
            }
            if (attempt > 8) throw std::runtime_error("orthonormalize_rows: cannot complete basis");
            for (std::size_t i = 0; i < len; ++i) vj[i] = rng.normal();
        }
    }
}

}  // namespace detail

/// Randomized rank-r SVD: Gaussian sketch of width r + oversample (capped at
/// min(m, n)), `power_iters` subspace iterations with re-orthonormalization
/// between passes, then an exact SVD of the small projected matrix.
inline SvdFactors svd_truncated(const Matrix& g, const TruncatedSvdOptions& opts, Rng rng) {
    const std::size_t m = g.rows();
    const std::size_t n = g.cols();
    const std::size_t d = std::min(m, n);
    if (opts.rank < 1 || opts.rank > d) {
        throw std::invalid_argument("svd_truncated: rank " + std::to_string(opts.rank) + " outside [1, " +
                                    std::to_string(d) + "]");
    }
    const std::size_t width = std::min(opts.rank + opts.oversample, d);

    // Sketch bases are stored as rows: Qt is width x m, Zt is width x n.
    Matrix omega_t = Matrix::gaussian(width, n, rng);
    Matrix qt = matmul_nt(omega_t, g);
    detail::orthonormalize_rows(qt, rng);
    for (std::size_t it = 0; it < opts.power_iters; ++it) {
        Matrix zt = matmul(qt, g);
        detail::orthonormalize_rows(zt, rng);
        qt = matmul_nt(zt, g);
        detail::orthonormalize_rows(qt, rng);
    }
    const Matrix b = matmul(qt, g);  // width x n
    SvdFactors small = svd_full(b);
    SvdFactors out;
    const Matrix u_full = matmul_tn(qt, small.U);  // m x width
    out.U = Matrix(m, opts.rank);
    out.V = Matrix(n, opts.rank);
    out.sigma.assign(small.sigma.begin(), small.sigma.begin() + static_cast<std::ptrdiff_t>(opts.rank));
    for (std::size_t k = 0; k < opts.rank; ++k) {
        for (std::size_t i = 0; i < m; ++i) out.U(i, k) = u_full(i, k);
        for (std::size_t i = 0; i < n; ++i) out.V(i, k) = small.V(i, k);
    }
    out.truncated_rank = opts.rank;
    normalize_signs(out);
    return out;
}

/// out[i] = min(sigma[i], tau). tau may be +inf.
inline std::vector<double> clamp_singular_values(std::span<const double> sigma, double tau) {
    std::vector<double> out(sigma.begin(), sigma.end());
    for (double& s : out) s = std::min(s, tau);
    return out;
}

/// Largest singular value, from the full SVD.
inline double spectral_norm(const Matrix& g) { return svd_full(g).sigma.front(); }

/// Largest singular value by power iteration on G^T G from a fixed start.
/// Cheaper than svd_full for telemetry; never overestimates.
inline double spectral_norm_power(const Matrix& g, int max_iters = 100, double rel_tol = 1e-10) {
    const std::size_t n = g.cols();
    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    Matrix xv(n, 1);
    double estimate = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) xv(i, 0) = x[i];
        const Matrix y = matmul(g, xv);
        const double ny = frobenius_norm(y);
        if (ny == 0.0) return estimate;
        const Matrix z = matmul_tn(g, y);
        const double nz = frobenius_norm(z);
        const double next = ny;
        for (std::size_t i = 0; i < n; ++i) x[i] = z(i, 0) / nz;
        if (std::abs(next - estimate) <= rel_tol * next) return next;
        estimate = next;
    }
    return estimate;
}

/// Largest principal angle (radians) between the column spans of A and B,
/// both with orthonormal columns and the same column count. Uses the sine
/// form ||(I - A A^T) B||_2 so that small angles stay accurate.
inline double max_principal_angle(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_principal_angle: shape mismatch");
    const Matrix residual = b - matmul(a, matmul_tn(a, b));
    const double s = std::min(1.0, spectral_norm(residual));
    return std::asin(s);
}

/// Columns [first, last) of m.
inline Matrix column_block(const Matrix& m, std::size_t first, std::size_t last) {
    Matrix out(m.rows(), last - first);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = first; j < last; ++j) out(i, j - first) = m(i, j);
    return out;
}

/// m x n test matrix U diag(ratio^i) V^T with Haar-like random orthogonal
/// factors (left factors of Gaussian matrices).
inline Matrix geometric_spectrum_matrix(std::size_t m, std::size_t n, double ratio, Rng& rng) {
    const std::size_t k = std::min(m, n);
    const Matrix u = column_block(svd_full(Matrix::gaussian(m, m, rng)).U, 0, k);
    const Matrix v = column_block(svd_full(Matrix::gaussian(n, n, rng)).U, 0, k);
    std::vector<double> sigma(k);
    for (std::size_t i = 0; i < k; ++i) sigma[i] = std::pow(ratio, static_cast<double>(i));
    return reconstruct(u, sigma, v);
}

}  // namespace specclip
