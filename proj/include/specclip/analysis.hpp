#pragma once

// Diagnostics: Monte-Carlo clipping bias, gradient spectra under corrupted
// samples, and log-log rate fitting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specclip/clipping.hpp"
#include "specclip/matrix.hpp"
#include "specclip/noise.hpp"
#include "specclip/optim.hpp"
#include "specclip/problems.hpp"
#include "specclip/rng.hpp"
#include "specclip/svd.hpp"

namespace specclip {

// ----------------------------------------------------------------- bias ----

/// Estimate of ||grad f(X) - E[C_tau(G) | X]||_F^2.
///
/// `delta_hat` is the pairwise U-statistic
///     (||sum_i d_i||^2 - sum_i ||d_i||^2) / (M (M - 1)),   d_i = C(G_i) - grad f,
/// which is unbiased for the squared norm of the mean (the plug-in
/// ||mean d_i||^2 carries an extra trace(Cov)/M), clamped at zero.
/// `delta_raw` keeps the unclamped value. `std_error` is the jackknife standard
/// error of the U-statistic (needs M >= 3; +inf otherwise).
struct BiasEstimate {
    double delta_hat = 0.0;
    double delta_raw = 0.0;
    std::size_t mc_samples = 0;
    double std_error = 0.0;
};

namespace detail {

inline BiasEstimate bias_from_deviations(const std::vector<Matrix>& d) {
    const std::size_t m = d.size();
    Matrix sum(d.front().rows(), d.front().cols());
    std::vector<double> sq(m);
    double q = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sum += d[i];
        sq[i] = inner(d[i], d[i]);
        q += sq[i];
    }
    const double s2 = inner(sum, sum);
    const auto md = static_cast<double>(m);
    BiasEstimate est;
    est.mc_samples = m;
    est.delta_raw = (s2 - q) / (md * (md - 1.0));
    est.delta_hat = std::max(0.0, est.delta_raw);
    if (m < 3) {
        est.std_error = std::numeric_limits<double>::infinity();
        return est;
    }
    std::vector<double> loo(m);
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double s2_i = s2 - 2.0 * inner(sum, d[i]) + sq[i];
        loo[i] = (s2_i - (q - sq[i])) / ((md - 1.0) * (md - 2.0));
        mean += loo[i];
    }
    mean /= md;
    double var = 0.0;
    for (double v : loo) var += (v - mean) * (v - mean);
    est.std_error = std::sqrt(var * (md - 1.0) / md);
    return est;
}

}  // namespace detail

/// Bias estimates for several thresholds from one shared set of M stochastic
/// gradients (common random numbers across thresholds). `sample(rng)` draws
/// one stochastic gradient; sample i uses stream.derive(i).
template <class Sampler>
std::vector<BiasEstimate> estimate_bias_curve(const Matrix& true_gradient, Sampler&& sample, const ClipSpec& clip,
                                              std::span<const double> taus, std::size_t mc_samples,
                                              const Rng& stream) {
    if (mc_samples < 2) throw std::invalid_argument("estimate_bias: need at least 2 Monte-Carlo samples");
    std::vector<Matrix> draws;
    draws.reserve(mc_samples);
    for (std::size_t i = 0; i < mc_samples; ++i) {
        Rng rng = stream.derive(i);
        draws.push_back(sample(rng));
        true_gradient.require_same(draws.back(), "estimate_bias");
    }
    std::vector<BiasEstimate> out;
    out.reserve(taus.size());
    for (std::size_t t = 0; t < taus.size(); ++t) {
        std::vector<Matrix> dev;
        dev.reserve(mc_samples);
        for (std::size_t i = 0; i < mc_samples; ++i) {
            const Rng sketch = stream.derive(i, 0x5EED, t);
            Matrix c = apply_clip(draws[i], taus[t], clip, sketch, false).clipped;
            c -= true_gradient;
            dev.push_back(std::move(c));
        }
        out.push_back(detail::bias_from_deviations(dev));
    }
    return out;
}

template <class Sampler>
BiasEstimate estimate_bias(const Matrix& true_gradient, Sampler&& sample, const ClipSpec& clip, double tau,
                           std::size_t mc_samples, const Rng& stream) {
    const double taus[1] = {tau};
    return estimate_bias_curve(true_gradient, std::forward<Sampler>(sample), clip, taus, mc_samples, stream).front();
}

/// Trace-regression convenience: stochastic gradient = exact gradient + noise.
inline std::vector<BiasEstimate> estimate_bias_curve(const TraceRegressionInstance& inst, const Matrix& x,
                                                     const NoiseModel& noise, const ClipSpec& clip,
                                                     std::span<const double> taus, std::size_t mc_samples,
                                                     std::uint64_t seed) {
    const Matrix grad = eval_gradient(inst, x);
    return estimate_bias_curve(grad, [&](Rng& rng) { return perturb(grad, noise, rng); }, clip, taus, mc_samples,
                               Rng(seed));
}

// ------------------------------------------------------------- spectrum ----

struct OutlierSpec {
    std::vector<std::size_t> counts{0, 1, 4};
    double target_shift = 10.0;  // |corrupted target - clean target|
};

struct SpectrumSnapshot {
    std::string layer;
    std::size_t step = 0;
    std::size_t outlier_count = 0;
    std::vector<double> top_k_sigmas;  // descending
};

/// Replace the targets of the first `count` samples by y +/- shift (sign from
/// the seeded stream).
inline Batch corrupt_batch(const Batch& clean, std::size_t count, double shift, std::uint64_t seed) {
    if (count > clean.size()) throw std::invalid_argument("corrupt_batch: more outliers than samples");
    Batch b = clean;
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) b.targets[i] += rng.sign() * shift;
    return b;
}

/// Per-layer gradient spectra for each outlier count. Each snapshot keeps
/// min(k_top, min(layer dims)) singular values.
inline std::vector<SpectrumSnapshot> spectrum_probe(std::span<const Matrix> weights, const Batch& clean,
                                                    const OutlierSpec& spec, std::size_t k_top, std::uint64_t seed,
                                                    std::size_t step = 0) {
    if (k_top < 1) throw std::invalid_argument("spectrum_probe: k_top must be >= 1");
    const auto names = MlpInstance::layer_names();
    std::vector<SpectrumSnapshot> out;
    for (std::size_t count : spec.counts) {
        const Batch b = corrupt_batch(clean, count, spec.target_shift, seed);
        const auto grads = eval_gradient(weights, b);
        for (std::size_t l = 0; l < grads.size(); ++l) {
            const auto f = svd_full(grads[l]);
            SpectrumSnapshot s;
            s.layer = names[l];
            s.step = step;
            s.outlier_count = count;
            const std::size_t keep = std::min(k_top, f.sigma.size());
            s.top_k_sigmas.assign(f.sigma.begin(), f.sigma.begin() + static_cast<std::ptrdiff_t>(keep));
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ----------------------------------------------------------------- rate ----

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RatePoint {
    double K = 0.0;
    double metric = 0.0;
};

/// Least-squares slope of log(metric) against log(K).
inline double fit_rate(std::span<const RatePoint> points) {
    std::set<double> distinct;
    for (const auto& p : points) {
        if (!(p.K > 0.0) || !(p.metric > 0.0) || !std::isfinite(p.metric)) {
            throw std::invalid_argument("fit_rate: K and metric must be positive and finite");
        }
        distinct.insert(p.K);
    }
    if (distinct.size() < 2) throw FitError("fit_rate: degenerate fit, all K values are equal");
    if (distinct.size() < 3) throw FitError("fit_rate: need at least 3 distinct K values");
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += std::log(p.K);
        my += std::log(p.metric);
    }
    const auto n = static_cast<double>(points.size());
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (const auto& p : points) {
        const double dx = std::log(p.K) - mx;
        sxy += dx * (std::log(p.metric) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

/// Spectrally clipped SGD on trace regression with the step size and constant
/// threshold scaled by the horizon K: eta = eta0 / sqrt(K),
/// tau = tau0 * K^(1/(3 alpha - 2)). Returns min_k ||grad f(X_k)||_F^2 over
/// k = 0..K-1 from X_0 = 0.
struct HorizonSchedule {
    double eta0 = 0.1;
    double tau0 = 2.0;
    double alpha = 2.0;
};

inline double clipped_sgd_min_grad_sq(const TraceRegressionInstance& inst, const NoiseModel& noise,
                                      std::size_t horizon, const HorizonSchedule& sched, std::uint64_t seed) {
    const auto k = static_cast<double>(horizon);
    StepConfig cfg;
    cfg.eta = sched.eta0 / std::sqrt(k);
    cfg.clip.kind = ClipKind::spectral_exact;
    cfg.threshold.mode = ThresholdMode::constant;
    cfg.threshold.tau = sched.tau0 * std::pow(k, 1.0 / (3.0 * sched.alpha - 2.0));
    cfg.track_sigma_max = false;
    ParamGroup group({{"X", Matrix(inst.n(), inst.n())}}, cfg.threshold, Rng(seed).derive(7));
    const Rng noise_stream = Rng(seed).derive(11);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t step = 0; step < horizon; ++step) {
        const Matrix grad = eval_gradient(inst, group.layer(0).param);
        best = std::min(best, inner(grad, grad));
        Rng rng = noise_stream.derive(step);
        const Matrix g[1] = {perturb(grad, noise, rng)};
        step_sgd(group, g, cfg);
    }
    return best;
}

// ------------------------------------------------------------ svd bench ----

struct SvdBenchReport {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t rank = 0;
    std::vector<double> sigma_full;       // top `rank` values
    std::vector<double> sigma_truncated;  // same count
    double max_rel_error = 0.0;
    double full_ns = 0.0;       // mean per call
    double truncated_ns = 0.0;  // mean per call
};

/// Top-r singular values of a geometric-spectrum matrix from svd_full and
/// svd_truncated, with mean timings over `reps` calls each.
inline SvdBenchReport svd_bench(std::size_t rows, std::size_t cols, const TruncatedSvdOptions& opts, double decay,
                                std::uint64_t seed, std::size_t reps = 3) {
    if (reps < 1) throw std::invalid_argument("svd_bench: reps must be >= 1");
    Rng rng(seed);
    const Matrix g = geometric_spectrum_matrix(rows, cols, decay, rng);
    using clock = std::chrono::steady_clock;
    SvdBenchReport rep;
    rep.rows = rows;
    rep.cols = cols;
    rep.rank = opts.rank;

    SvdFactors full, trunc;
    auto t0 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) full = svd_full(g);
    auto t1 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) trunc = svd_truncated(g, opts, Rng(seed).derive(i));
    auto t2 = clock::now();
    rep.full_ns = std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(reps);
    rep.truncated_ns = std::chrono::duration<double, std::nano>(t2 - t1).count() / static_cast<double>(reps);

    rep.sigma_full.assign(full.sigma.begin(), full.sigma.begin() + static_cast<std::ptrdiff_t>(opts.rank));
    rep.sigma_truncated = trunc.sigma;
    for (std::size_t i = 0; i < opts.rank; ++i) {
        const double denom = rep.sigma_full[i] > 0.0 ? rep.sigma_full[i] : 1.0;
        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(rep.sigma_truncated[i] - rep.sigma_full[i]) / denom);
    }
    return rep;
}

}  // namespace specclip
