#pragma once

// Gradient noise injectors. The heavy-tailed model adds, with probability
// `prob`, a rank-one outlier s * sign * u v^T where u and v are uniformly
// random unit vectors, s ~ Pareto(alpha, x_m) and sign is a fair coin.
// Gaussian noise is added on every draw; `prob` does not apply to it.

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "specclip/matrix.hpp"
#include "specclip/rng.hpp"

namespace specclip {

enum class NoiseKind { none, pareto_rank_one, gaussian };

struct NoiseModel {
    NoiseKind kind = NoiseKind::none;
    double prob = 0.1;
    double alpha = 1.1;
    double x_m = 2.0;
    double gaussian_std = 0.0;

    void validate() const {
        if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("NoiseModel: prob must lie in [0, 1]");
        if (kind == NoiseKind::pareto_rank_one && !(alpha > 0.0 && x_m > 0.0)) {
            throw std::invalid_argument("NoiseModel: Pareto alpha and x_m must be positive");
        }
        if (!(gaussian_std >= 0.0)) throw std::invalid_argument("NoiseModel: gaussian_std must be >= 0");
    }
};

/// Inverse CDF of Pareto(alpha, x_m) at u in (0, 1].
inline double pareto_from_uniform(double alpha, double x_m, double u) { return x_m * std::pow(u, -1.0 / alpha); }

inline double sample_pareto(double alpha, double x_m, Rng& rng) {
    if (!(alpha > 0.0 && x_m > 0.0)) throw std::invalid_argument("sample_pareto: alpha and x_m must be positive");
    return pareto_from_uniform(alpha, x_m, rng.uniform_pos());
}

inline Matrix random_unit_column(std::size_t n, Rng& rng) {
    for (;;) {
        Matrix v = Matrix::gaussian(n, 1, rng);
        const double nrm = frobenius_norm(v);
        if (nrm > 0.0) return (1.0 / nrm) * v;
    }
}

/// One draw of the noise process for a rows x cols gradient.
struct Perturbation {
    bool activated = false;
    double magnitude = 0.0;  // Pareto sample s
    int sign = 1;
    Matrix delta;  // additive term (zero when not activated)
};

inline Perturbation draw_perturbation(std::size_t rows, std::size_t cols, const NoiseModel& model, Rng& rng) {
    model.validate();
    Perturbation p;
    p.delta = Matrix(rows, cols);
    switch (model.kind) {
        case NoiseKind::none:
            break;
        case NoiseKind::gaussian:
            if (model.gaussian_std > 0.0) {
                p.activated = true;
                p.delta = Matrix::gaussian(rows, cols, rng, model.gaussian_std);
            }
            break;
        case NoiseKind::pareto_rank_one: {
            // The coin is drawn first so that an inactive step consumes the
            // same amount of the stream regardless of prob.
            const bool fire = rng.uniform() < model.prob;
            const double s = sample_pareto(model.alpha, model.x_m, rng);
            const int sign = rng.sign();
            if (!fire) break;
            const Matrix u = random_unit_column(rows, rng);
            const Matrix v = random_unit_column(cols, rng);
            p.activated = true;
            p.magnitude = s;
            p.sign = sign;
            p.delta = (s * sign) * matmul_nt(u, v);
            break;
        }
    }
    return p;
}

inline Matrix perturb(const Matrix& g, const NoiseModel& model, Rng& rng) {
    Perturbation p = draw_perturbation(g.rows(), g.cols(), model, rng);
    if (!p.activated) return g;
    return g + p.delta;
}

}  // namespace specclip
