#pragma once

// Adaptive clipping thresholds. One ThresholdState lives with each parameter
// matrix; optimizers read `current_threshold` before clipping and feed the raw
// gradient's top singular value back afterwards.
//
// Warm-up: a threshold that is <= 0, or a quantile window that is still
// empty, means "no clipping this step" and reads as +inf.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace specclip {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ThresholdMode { disabled, constant, ema, quantile };

struct ThresholdState {
    ThresholdMode mode = ThresholdMode::disabled;
    double tau = 0.0;       // last computed threshold
    double ema_raw = 0.0;   // EMA accumulator before bias correction
    double theta = 0.9;
    std::deque<double> window;
    double q = 0.85;
    std::size_t w = 100;
    std::size_t step_count = 0;

    static ThresholdState disabled() { return {}; }

    static ThresholdState constant(double tau) {
        ThresholdState s;
        s.mode = ThresholdMode::constant;
        s.tau = tau;
        return s;
    }

    static ThresholdState ema(double theta = 0.9) {
        if (!(theta >= 0.0 && theta < 1.0)) throw std::invalid_argument("ema threshold: theta must lie in [0, 1)");
        ThresholdState s;
        s.mode = ThresholdMode::ema;
        s.theta = theta;
        return s;
    }

    static ThresholdState quantile(double q = 0.85, std::size_t w = 100) {
        if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile threshold: q must lie in (0, 1]");
        if (w < 1) throw std::invalid_argument("quantile threshold: window must hold at least one value");
        ThresholdState s;
        s.mode = ThresholdMode::quantile;
        s.q = q;
        s.w = w;
        return s;
    }
};

/// Nearest-rank quantile: the ceil(q*n)-th smallest value. Empty input gives
/// +inf.
inline double nearest_rank_quantile(std::span<const double> values, double q) {
    if (values.empty()) return kInf;
    std::vector<double> sorted(values.begin(), values.end());
    const auto n = static_cast<double>(sorted.size());
    // The 1e-9 guard keeps q*n that is integral in exact arithmetic (0.85*100)
    // from rounding up to the next rank.
    auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
    return sorted[rank - 1];
}

inline double nearest_rank_quantile(const std::deque<double>& window, double q) {
    const std::vector<double> copy(window.begin(), window.end());
    return nearest_rank_quantile(std::span<const double>(copy), q);
}

/// tau_hat <- theta*tau_hat + (1-theta)*sigma_max; tau <- tau_hat / (1 - theta^(k+1)).
inline ThresholdState threshold_update_ema(ThresholdState state, double sigma_max) {
    if (state.mode != ThresholdMode::ema) throw std::logic_error("threshold_update_ema: state is not in ema mode");
    state.ema_raw = state.theta * state.ema_raw + (1.0 - state.theta) * sigma_max;
    const double correction = 1.0 - std::pow(state.theta, static_cast<double>(state.step_count + 1));
    state.tau = state.ema_raw / correction;
    ++state.step_count;
    return state;
}

/// The threshold becomes the q-quantile of the window as it stood before this
/// observation; the observation is then appended and the oldest value evicted
/// once the window exceeds w entries.
inline ThresholdState threshold_update_quantile(ThresholdState state, double sigma_max) {
    if (state.mode != ThresholdMode::quantile) {
        throw std::logic_error("threshold_update_quantile: state is not in quantile mode");
    }
    state.tau = state.window.empty() ? 0.0 : nearest_rank_quantile(state.window, state.q);
    state.window.push_back(sigma_max);
    while (state.window.size() > state.w) state.window.pop_front();
    ++state.step_count;
    return state;
}

/// Advance any state by one observation. Constant and disabled states only
/// count steps.
inline ThresholdState threshold_observe(ThresholdState state, double sigma_max) {
    switch (state.mode) {
        case ThresholdMode::ema:
            return threshold_update_ema(std::move(state), sigma_max);
        case ThresholdMode::quantile:
            return threshold_update_quantile(std::move(state), sigma_max);
        case ThresholdMode::constant:
        case ThresholdMode::disabled:
            ++state.step_count;
            return state;
    }
    return state;
}

inline double current_threshold(const ThresholdState& state) {
    if (state.mode == ThresholdMode::disabled) return kInf;
    if (std::isnan(state.tau) || state.tau <= 0.0) return kInf;
    return state.tau;
}

}  // namespace specclip
