#pragma once

// Synthetic objectives with analytic gradients:
//   - trace regression  f(X) = (1/N) sum_i (<A_i, X> - b_i)^2
//   - a 4-layer tanh MLP regressing y = x1*x2*x3 under mean squared error
//   - a diagonal convex quadratic used as a sanity problem

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specclip/matrix.hpp"
#include "specclip/rng.hpp"

namespace specclip {

// ---------------------------------------------------------------- trace ----

struct TraceRegressionInstance {
    std::vector<Matrix> A;
    std::vector<double> b;
    Matrix x_star;
    double label_noise = 0.0;

    [[nodiscard]] std::size_t n() const { return x_star.rows(); }
    [[nodiscard]] std::size_t count() const { return A.size(); }

    /// b_i = <A_i, x_star> + label_noise * N(0, 1).
    static TraceRegressionInstance planted(std::vector<Matrix> a, Matrix x_star, double label_noise, Rng& rng) {
        TraceRegressionInstance inst;
        inst.b.reserve(a.size());
        for (const auto& ai : a) {
            ai.require_same(x_star, "trace instance");
            inst.b.push_back(inner(ai, x_star) + (label_noise > 0.0 ? label_noise * rng.normal() : 0.0));
        }
        inst.A = std::move(a);
        inst.x_star = std::move(x_star);
        inst.label_noise = label_noise;
        return inst;
    }
};

/// Sensing matrices with i.i.d. N(0,1) entries; x_star = P Q^T rescaled to
/// unit Frobenius norm, P and Q being n x rank Gaussian factors.
inline TraceRegressionInstance make_trace_instance(std::size_t n, std::size_t count, std::size_t rank,
                                                   std::uint64_t seed, double label_noise = 0.0) {
    if (n < 1 || count < 1) throw std::invalid_argument("make_trace_instance: n and N must be >= 1");
    if (rank < 1 || rank > n) throw std::invalid_argument("make_trace_instance: rank must lie in [1, n]");
    Rng root(seed);
    Rng factor_rng = root.derive(1);
    const Matrix p = Matrix::gaussian(n, rank, factor_rng);
    const Matrix q = Matrix::gaussian(n, rank, factor_rng);
    Matrix x_star = matmul_nt(p, q);
    x_star *= 1.0 / frobenius_norm(x_star);
    Rng sense_rng = root.derive(2);
    std::vector<Matrix> a;
    a.reserve(count);
    for (std::size_t i = 0; i < count; ++i) a.push_back(Matrix::gaussian(n, n, sense_rng));
    Rng label_rng = root.derive(3);
    return TraceRegressionInstance::planted(std::move(a), std::move(x_star), label_noise, label_rng);
}

inline double eval_objective(const TraceRegressionInstance& inst, const Matrix& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < inst.count(); ++i) {
        const double r = inner(inst.A[i], x) - inst.b[i];
        s += r * r;
    }
    return s / static_cast<double>(inst.count());
}

/// (2/N) sum_i (<A_i, X> - b_i) A_i
inline Matrix eval_gradient(const TraceRegressionInstance& inst, const Matrix& x) {
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < inst.count(); ++i) {
        const double r = inner(inst.A[i], x) - inst.b[i];
        g.axpy(2.0 * r / static_cast<double>(inst.count()), inst.A[i]);
    }
    return g;
}

// ------------------------------------------------------------------ mlp ----

struct MlpShape {
    std::size_t input_dim = 100;
    std::size_t hidden = 100;
};

inline constexpr std::size_t kMlpLayers = 4;

struct MlpInstance {
    MlpShape shape;
    std::vector<Matrix> weights;  // W1 (h x d), W2 (h x h), W3 (h x h), W4 (1 x h)

    static std::vector<std::string> layer_names() { return {"W1", "W2", "W3", "W4"}; }
};

struct Batch {
    Matrix inputs;                // B x input_dim
    std::vector<double> targets;  // B
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return targets.size(); }
};

inline double mlp_target(std::span<const double> x) {
    if (x.size() < 3) throw ShapeError("mlp_target: input needs at least 3 coordinates");
    return x[0] * x[1] * x[2];
}

inline Batch make_batch(Matrix inputs, std::uint64_t seed = 0) {
    Batch b;
    b.targets.reserve(inputs.rows());
    for (std::size_t i = 0; i < inputs.rows(); ++i) b.targets.push_back(mlp_target(inputs.row(i)));
    b.inputs = std::move(inputs);
    b.seed = seed;
    return b;
}

/// Standard normal inputs, targets from the x1*x2*x3 rule.
inline Batch sample_batch(const MlpShape& shape, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size < 1) throw std::invalid_argument("sample_batch: batch_size must be >= 1");
    if (shape.input_dim < 3) throw std::invalid_argument("sample_batch: input_dim must be >= 3");
    Rng rng(seed);
    return make_batch(Matrix::gaussian(batch_size, shape.input_dim, rng), seed);
}

/// Gaussian init with std 1/sqrt(fan_in).
inline MlpInstance make_mlp(const MlpShape& shape, std::uint64_t seed) {
    if (shape.input_dim < 3 || shape.hidden < 1) throw std::invalid_argument("make_mlp: bad shape");
    Rng rng(seed);
    MlpInstance m;
    m.shape = shape;
    const std::size_t h = shape.hidden;
    const std::size_t fan_in[kMlpLayers] = {shape.input_dim, h, h, h};
    const std::size_t out_dim[kMlpLayers] = {h, h, h, 1};
    for (std::size_t l = 0; l < kMlpLayers; ++l) {
        Rng layer_rng = rng.derive(l);
        m.weights.push_back(
            Matrix::gaussian(out_dim[l], fan_in[l], layer_rng, 1.0 / std::sqrt(static_cast<double>(fan_in[l]))));
    }
    return m;
}

namespace detail {

inline void check_mlp_weights(std::span<const Matrix> w, std::size_t input_dim) {
    if (w.size() != kMlpLayers) throw ShapeError("mlp: expected 4 weight matrices");
    const std::size_t h = w[0].rows();
    if (w[0].cols() != input_dim || w[1].rows() != h || w[1].cols() != h || w[2].rows() != h || w[2].cols() != h ||
        w[3].rows() != 1 || w[3].cols() != h) {
        throw ShapeError("mlp: weight shapes do not form a " + std::to_string(input_dim) + "-" + std::to_string(h) +
                         "-" + std::to_string(h) + "-" + std::to_string(h) + "-1 network");
    }
}

// tanh(x) = sign(x) (1 - e) / (1 + e), e = exp(-2|x|). Eigen vectorises exp for
// doubles, which libm tanh is not; the absolute error stays near machine epsilon.
inline void tanh_inplace(Matrix& m) {
    auto v = m.values();
    Eigen::Map<Eigen::ArrayXd> a(v.data(), static_cast<Eigen::Index>(v.size()));
    const Eigen::ArrayXd e = (-2.0 * a.abs()).exp();
    a = a.sign() * (1.0 - e) / (1.0 + e);
}

struct MlpForward {
    Matrix a1, a2, a3;  // B x h post-activations
    std::vector<double> prediction;
};

inline MlpForward mlp_forward(std::span<const Matrix> w, const Matrix& x) {
    check_mlp_weights(w, x.cols());
    MlpForward f;
    f.a1 = matmul_nt(x, w[0]);
    tanh_inplace(f.a1);
    f.a2 = matmul_nt(f.a1, w[1]);
    tanh_inplace(f.a2);
    f.a3 = matmul_nt(f.a2, w[2]);
    tanh_inplace(f.a3);
    f.prediction.resize(x.rows());
    for (std::size_t b = 0; b < x.rows(); ++b) f.prediction[b] = dot(f.a3.row(b), w[3].row(0));
    return f;
}

// dZ = dA * (1 - A^2)
inline void tanh_backward(Matrix& grad, const Matrix& activation) {
    auto g = grad.values();
    auto a = activation.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - a[i] * a[i];
}

}  // namespace detail

inline std::vector<double> mlp_predict(std::span<const Matrix> weights, const Matrix& inputs) {
    return detail::mlp_forward(weights, inputs).prediction;
}

/// Mean squared error over the batch.
inline double eval_objective(std::span<const Matrix> weights, const Batch& batch) {
    const auto pred = mlp_predict(weights, batch.inputs);
    double s = 0.0;
    for (std::size_t b = 0; b < pred.size(); ++b) {
        const double r = pred[b] - batch.targets[b];
        s += r * r;
    }
    return s / static_cast<double>(pred.size());
}

struct LossAndGradient {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

/// Backprop through the fixed 4-layer network; one gradient per weight matrix.
/// Shares the forward pass between the loss and the gradient.
inline LossAndGradient eval_loss_and_gradient(std::span<const Matrix> w, const Batch& batch) {
    const auto f = detail::mlp_forward(w, batch.inputs);
    const std::size_t bsz = batch.size();
    Matrix dpred(bsz, 1);
    double loss = 0.0;
    for (std::size_t b = 0; b < bsz; ++b) {
        const double r = f.prediction[b] - batch.targets[b];
        loss += r * r;
        dpred(b, 0) = 2.0 * r / static_cast<double>(bsz);
    }
    std::vector<Matrix> grads(kMlpLayers);
    grads[3] = matmul_tn(dpred, f.a3);
    Matrix dz = matmul(dpred, w[3]);
    detail::tanh_backward(dz, f.a3);
    grads[2] = matmul_tn(dz, f.a2);
    dz = matmul(dz, w[2]);
    detail::tanh_backward(dz, f.a2);
    grads[1] = matmul_tn(dz, f.a1);
    dz = matmul(dz, w[1]);
    detail::tanh_backward(dz, f.a1);
    grads[0] = matmul_tn(dz, batch.inputs);
    return {loss / static_cast<double>(bsz), std::move(grads)};
}

inline std::vector<Matrix> eval_gradient(std::span<const Matrix> w, const Batch& batch) {
    return eval_loss_and_gradient(w, batch).grads;
}

// ------------------------------------------------------------ quadratic ----

/// f(X) = 1/2 * || S (X - C) ||_F^2 with S = diag(row_scales).
struct QuadraticProblem {
    Matrix center;
    std::vector<double> row_scales;

    static QuadraticProblem make(std::size_t rows, std::size_t cols, std::uint64_t seed) {
        Rng rng(seed);
        QuadraticProblem p;
        p.center = Matrix::gaussian(rows, cols, rng);
        p.row_scales.resize(rows);
        for (std::size_t i = 0; i < rows; ++i) p.row_scales[i] = 0.5 + rng.uniform();
        return p;
    }
};

inline double eval_objective(const QuadraticProblem& p, const Matrix& x) {
    p.center.require_same(x, "quadratic objective");
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double w = p.row_scales[i] * p.row_scales[i];
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double d = x(i, j) - p.center(i, j);
            s += w * d * d;
        }
    }
    return 0.5 * s;
}

inline Matrix eval_gradient(const QuadraticProblem& p, const Matrix& x) {
    p.center.require_same(x, "quadratic gradient");
    Matrix g = x - p.center;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const double w = p.row_scales[i] * p.row_scales[i];
        for (double& v : g.row(i)) v *= w;
    }
    return g;
}

}  // namespace specclip
