#pragma once

// Clipped first-order steppers over a group of matrix parameters.
//
// Every stepper clips the raw gradient with the layer's threshold from the
// previous step, applies its update, and only then advances the threshold
// with the observed top singular value of the raw gradient.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specclip/clipping.hpp"
#include "specclip/matrix.hpp"
#include "specclip/rng.hpp"
#include "specclip/threshold.hpp"

namespace specclip {

enum class ClipKind { none, norm, spectral_exact, spectral_truncated };
enum class OptimizerKind { sgd, sgdm, adam };

struct ClipSpec {
    ClipKind kind = ClipKind::none;
    std::size_t rank = 10;
    std::size_t power_iters = 1;
    std::size_t oversample = 5;
};

/// How each layer's ThresholdState is created.
struct ThresholdSpec {
    ThresholdMode mode = ThresholdMode::disabled;
    double tau = kInf;
    double theta = 0.9;
    double q = 0.85;
    std::size_t w = 100;

    [[nodiscard]] ThresholdState make_state() const {
        switch (mode) {
            case ThresholdMode::constant:
                return ThresholdState::constant(tau);
            case ThresholdMode::ema:
                return ThresholdState::ema(theta);
            case ThresholdMode::quantile:
                return ThresholdState::quantile(q, w);
            case ThresholdMode::disabled:
                break;
        }
        return ThresholdState::disabled();
    }
};

struct StepConfig {
    double eta = 1e-3;
    double beta = 0.9;  // momentum, also Adam's first-moment decay
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    ClipSpec clip;
    ThresholdSpec threshold;
    // Compute sigma_max for the report even when the clipper does not need it.
    bool track_sigma_max = true;

    void validate() const {
        if (!(eta > 0.0)) throw std::invalid_argument("StepConfig: eta must be positive");
        if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("StepConfig: beta must lie in [0, 1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
            throw std::invalid_argument("StepConfig: adam_beta2 must lie in [0, 1)");
        }
        if (!(adam_eps > 0.0)) throw std::invalid_argument("StepConfig: adam_eps must be positive");
        if (clip.kind == ClipKind::spectral_truncated && clip.rank < 1) {
            throw std::invalid_argument("StepConfig: truncated rank must be >= 1");
        }
    }
};

struct Layer {
    std::string name;
    Matrix param;
    Matrix momentum;
    Matrix second_moment;
    ThresholdState threshold;
};

/// Parameters, optimizer buffers, and one threshold state per layer.
class ParamGroup {
public:
    ParamGroup() = default;

    ParamGroup(std::vector<std::pair<std::string, Matrix>> params, const ThresholdSpec& thresholds,
               Rng sketch_stream = Rng{0})
        : sketch_stream_{sketch_stream} {
        for (auto& [name, p] : params) add_layer(std::move(name), std::move(p), thresholds.make_state());
    }

    void add_layer(std::string name, Matrix param, ThresholdState threshold) {
        Layer l;
        l.name = std::move(name);
        l.momentum = Matrix(param.rows(), param.cols());
        l.second_moment = Matrix(param.rows(), param.cols());
        l.param = std::move(param);
        l.threshold = std::move(threshold);
        layers_.push_back(std::move(l));
    }

    [[nodiscard]] std::size_t size() const { return layers_.size(); }
    [[nodiscard]] const Layer& layer(std::size_t i) const { return layers_[i]; }
    Layer& layer(std::size_t i) { return layers_[i]; }
    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    [[nodiscard]] std::vector<Matrix> params() const {
        std::vector<Matrix> out;
        out.reserve(layers_.size());
        for (const auto& l : layers_) out.push_back(l.param);
        return out;
    }

    [[nodiscard]] std::uint64_t step_count() const { return step_count_; }
    [[nodiscard]] Rng sketch_stream(std::size_t layer) const { return sketch_stream_.derive(step_count_, layer); }
    void advance() { ++step_count_; }

private:
    std::vector<Layer> layers_;
    std::uint64_t step_count_ = 0;
    Rng sketch_stream_{0};
};

/// Apply the configured clipper with threshold `tau`. The truncated path uses
/// min(rank, min(m, n)) so thin layers (e.g. a 1 x h output row) still work.
inline ClipReport apply_clip(const Matrix& g, double tau, const ClipSpec& spec, Rng sketch, bool track_sigma_max) {
    ClipReport r;
    switch (spec.kind) {
        case ClipKind::spectral_exact:
            return clip_spectral_exact(g, tau);
        case ClipKind::spectral_truncated: {
            const TruncatedSvdOptions opts{std::min(spec.rank, g.min_dim()), spec.power_iters, spec.oversample};
            return clip_spectral_truncated(g, tau, opts, sketch);
        }
        case ClipKind::norm: {
            const double nrm = frobenius_norm(g);
            r.tau = tau;
            r.clipped = clip_norm(g, tau);
            r.num_clamped = nrm > tau ? 1 : 0;
            break;
        }
        case ClipKind::none:
            r.tau = tau;
            r.clipped = g;
            break;
    }
    if (track_sigma_max) {
        r.sigma_max_pre = spectral_norm_power(g);
        r.sigma_max_post = spec.kind == ClipKind::norm && r.num_clamped > 0
                               ? r.sigma_max_pre * tau / frobenius_norm(g)
                               : r.sigma_max_pre;
    }
    return r;
}

namespace detail {

inline void check_grads(const ParamGroup& group, std::span<const Matrix> grads) {
    if (grads.size() != group.size()) {
        throw ShapeError("step: " + std::to_string(grads.size()) + " gradients for " + std::to_string(group.size()) +
                         " layers");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].same_shape(group.layer(i).param)) {
            throw ShapeError("step: layer '" + group.layer(i).name + "' expects " +
                             group.layer(i).param.shape_string() + ", gradient is " + grads[i].shape_string());
        }
    }
}

// The statistic fed back to the threshold: sigma_max for spectral clippers,
// the Frobenius norm for norm clipping (the two coincide for vectors).
// Unclipped runs leave thresholds untouched.
inline void observe(Layer& layer, const Matrix& raw, const ClipReport& r, const ClipSpec& spec) {
    switch (spec.kind) {
        case ClipKind::spectral_exact:
        case ClipKind::spectral_truncated:
            layer.threshold = threshold_observe(std::move(layer.threshold), r.sigma_max_pre);
            break;
        case ClipKind::norm:
            layer.threshold = threshold_observe(std::move(layer.threshold), frobenius_norm(raw));
            break;
        case ClipKind::none:
            break;
    }
}

template <class Update>
std::vector<ClipReport> step_impl(ParamGroup& group, std::span<const Matrix> grads, const StepConfig& cfg,
                                  Update&& update) {
    cfg.validate();
    check_grads(group, grads);
    std::vector<ClipReport> reports;
    reports.reserve(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
        Layer& layer = group.layer(i);
        const double tau = current_threshold(layer.threshold);
        ClipReport r = apply_clip(grads[i], tau, cfg.clip, group.sketch_stream(i), cfg.track_sigma_max);
        update(layer, r.clipped);
        observe(layer, grads[i], r, cfg.clip);
        reports.push_back(std::move(r));
    }
    group.advance();
    return reports;
}

}  // namespace detail

/// X <- X - eta * C_tau(G)
inline std::vector<ClipReport> step_sgd(ParamGroup& group, std::span<const Matrix> grads, const StepConfig& cfg) {
    return detail::step_impl(group, grads, cfg, [&](Layer& l, const Matrix& c) { l.param.axpy(-cfg.eta, c); });
}

/// B <- beta*B + (1-beta)*C_tau(G);  X <- X - eta*B
inline std::vector<ClipReport> step_sgdm(ParamGroup& group, std::span<const Matrix> grads, const StepConfig& cfg) {
    return detail::step_impl(group, grads, cfg, [&](Layer& l, const Matrix& c) {
        l.momentum *= cfg.beta;
        l.momentum.axpy(1.0 - cfg.beta, c);
        l.param.axpy(-cfg.eta, l.momentum);
    });
}

/// Adam with bias correction; the clipped gradient feeds both moments.
inline std::vector<ClipReport> step_adam(ParamGroup& group, std::span<const Matrix> grads, const StepConfig& cfg) {
    const double t = static_cast<double>(group.step_count() + 1);
    const double c1 = 1.0 - std::pow(cfg.beta, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    return detail::step_impl(group, grads, cfg, [&](Layer& l, const Matrix& c) {
        auto m = l.momentum.values();
        auto v = l.second_moment.values();
        auto x = l.param.values();
        auto g = c.values();
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = cfg.beta * m[i] + (1.0 - cfg.beta) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            x[i] -= cfg.eta * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    });
}

inline std::vector<ClipReport> step(OptimizerKind kind, ParamGroup& group, std::span<const Matrix> grads,
                                    const StepConfig& cfg) {
    switch (kind) {
        case OptimizerKind::sgd:
            return step_sgd(group, grads, cfg);
        case OptimizerKind::sgdm:
            return step_sgdm(group, grads, cfg);
        case OptimizerKind::adam:
            return step_adam(group, grads, cfg);
    }
    throw std::invalid_argument("step: unknown optimizer kind");
}

}  // namespace specclip
