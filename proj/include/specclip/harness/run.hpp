#pragma once

// Seeded experiment execution and (eta, tau) sweeps.
//
// Random streams are derived from the run seed by purpose, so e.g. the batch
// drawn at step k does not depend on which clipper is configured.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "specclip/analysis.hpp"
#include "specclip/harness/config.hpp"
#include "specclip/harness/records.hpp"
#include "specclip/noise.hpp"
#include "specclip/optim.hpp"
#include "specclip/problems.hpp"

namespace specclip {

inline constexpr double kDivergenceLoss = 1e12;

inline bool is_divergent(double loss) { return !std::isfinite(loss) || loss > kDivergenceLoss; }

namespace stream_tag {
inline constexpr std::uint64_t problem = 1;
inline constexpr std::uint64_t batch = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t sketch = 4;
inline constexpr std::uint64_t eval = 5;
inline constexpr std::uint64_t init = 6;
inline constexpr std::uint64_t bias = 7;
}  // namespace stream_tag

struct Evaluation {
    double loss = 0.0;
    double grad_fro = 0.0;
    std::vector<Matrix> grads;  // noise-free
};

/// What the run loop needs from a problem.
class Objective {
public:
    virtual ~Objective() = default;
    [[nodiscard]] virtual std::vector<std::pair<std::string, Matrix>> initial_params() const = 0;
    [[nodiscard]] virtual Evaluation evaluate(std::span<const Matrix> params, std::size_t step) const = 0;
    [[nodiscard]] virtual double final_loss(std::span<const Matrix> params) const = 0;
    /// Exact gradient for bias estimates; empty when unavailable.
    [[nodiscard]] virtual std::optional<Matrix> exact_gradient(std::span<const Matrix> params) const = 0;
};

namespace detail {

inline double total_norm(std::span<const Matrix> grads) {
    double s = 0.0;
    for (const auto& g : grads) s += inner(g, g);
    return std::sqrt(s);
}

class TraceObjective final : public Objective {
public:
    TraceObjective(const ProblemSpec& spec, std::uint64_t seed)
        : inst_{make_trace_instance(spec.n, spec.N, spec.rank, seed, spec.label_noise)} {}

    [[nodiscard]] std::vector<std::pair<std::string, Matrix>> initial_params() const override {
        return {{"X", Matrix(inst_.n(), inst_.n())}};
    }
    [[nodiscard]] Evaluation evaluate(std::span<const Matrix> p, std::size_t) const override {
        Evaluation e;
        e.loss = eval_objective(inst_, p[0]);
        e.grads.push_back(eval_gradient(inst_, p[0]));
        e.grad_fro = frobenius_norm(e.grads[0]);
        return e;
    }
    [[nodiscard]] double final_loss(std::span<const Matrix> p) const override { return eval_objective(inst_, p[0]); }
    [[nodiscard]] std::optional<Matrix> exact_gradient(std::span<const Matrix> p) const override {
        return eval_gradient(inst_, p[0]);
    }

private:
    TraceRegressionInstance inst_;
};

class QuadraticObjective final : public Objective {
public:
    QuadraticObjective(const ProblemSpec& spec, std::uint64_t seed) : prob_{QuadraticProblem::make(spec.n, spec.n, seed)} {}

    [[nodiscard]] std::vector<std::pair<std::string, Matrix>> initial_params() const override {
        return {{"X", Matrix(prob_.center.rows(), prob_.center.cols())}};
    }
    [[nodiscard]] Evaluation evaluate(std::span<const Matrix> p, std::size_t) const override {
        Evaluation e;
        e.loss = eval_objective(prob_, p[0]);
        e.grads.push_back(eval_gradient(prob_, p[0]));
        e.grad_fro = frobenius_norm(e.grads[0]);
        return e;
    }
    [[nodiscard]] double final_loss(std::span<const Matrix> p) const override { return eval_objective(prob_, p[0]); }
    [[nodiscard]] std::optional<Matrix> exact_gradient(std::span<const Matrix> p) const override {
        return eval_gradient(prob_, p[0]);
    }

private:
    QuadraticProblem prob_;
};

// Online regime: every step draws a fresh batch; the reported loss and
// grad_fro are those of that batch. Final loss uses a fixed evaluation batch.
class MlpObjective final : public Objective {
public:
    MlpObjective(const ProblemSpec& spec, const Rng& root)
        : spec_{spec},
          shape_{spec.input_dim, spec.hidden},
          init_{make_mlp(shape_, root.derive(stream_tag::init).next_u64())},
          batch_stream_{root.derive(stream_tag::batch)},
          eval_batch_{sample_batch(shape_, spec.eval_batch, root.derive(stream_tag::eval).next_u64())} {}

    [[nodiscard]] std::vector<std::pair<std::string, Matrix>> initial_params() const override {
        std::vector<std::pair<std::string, Matrix>> out;
        const auto names = MlpInstance::layer_names();
        for (std::size_t l = 0; l < init_.weights.size(); ++l) out.emplace_back(names[l], init_.weights[l]);
        return out;
    }
    [[nodiscard]] Evaluation evaluate(std::span<const Matrix> p, std::size_t step) const override {
        const Batch b = sample_batch(shape_, spec_.batch_size, batch_stream_.derive(step).next_u64());
        Evaluation e;
        auto lg = eval_loss_and_gradient(p, b);
        e.loss = lg.loss;
        e.grads = std::move(lg.grads);
        e.grad_fro = total_norm(e.grads);
        return e;
    }
    [[nodiscard]] double final_loss(std::span<const Matrix> p) const override { return eval_objective(p, eval_batch_); }
    [[nodiscard]] std::optional<Matrix> exact_gradient(std::span<const Matrix>) const override { return std::nullopt; }

private:
    ProblemSpec spec_;
    MlpShape shape_;
    MlpInstance init_;
    Rng batch_stream_;
    Batch eval_batch_;
};

}  // namespace detail

inline std::unique_ptr<Objective> make_objective(const ProblemSpec& spec, std::uint64_t seed) {
    const Rng root(seed);
    switch (spec.kind) {
        case ProblemKind::trace:
            return std::make_unique<detail::TraceObjective>(spec, root.derive(stream_tag::problem).next_u64());
        case ProblemKind::quadratic:
            return std::make_unique<detail::QuadraticObjective>(spec, root.derive(stream_tag::problem).next_u64());
        case ProblemKind::mlp:
            return std::make_unique<detail::MlpObjective>(spec, root);
    }
    throw ConfigError("problem.kind", "unknown problem");
}

struct BiasRow {
    std::size_t step = 0;
    BiasEstimate estimate;
};

struct RunSummary {
    std::size_t steps_completed = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    std::optional<std::size_t> divergence_step;
    double mean_bias = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
    std::vector<RunRecord> records;
    std::vector<BiasRow> bias;
    RunSummary summary;
};

/// K optimizer steps under the configured clipper and noise. Deterministic in
/// (config, seed) apart from wall_ns. A loss that is non-finite or above 1e12
/// stops the run and is reported as divergence at that step.
inline RunResult run(const ExperimentConfig& config, std::uint64_t seed) {
    validate(config);
    const auto objective = make_objective(config.problem, seed);
    const Rng root(seed);
    const Rng noise_stream = root.derive(stream_tag::noise);
    const Rng bias_stream = root.derive(stream_tag::bias);
    StepConfig cfg = config.optim.step;
    ParamGroup group(objective->initial_params(), cfg.threshold, root.derive(stream_tag::sketch));

    RunResult result;
    const auto start = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
    };
    double bias_sum = 0.0;

    for (std::size_t k = 0; k < config.run.steps; ++k) {
        const auto params = group.params();
        Evaluation e = objective->evaluate(params, k);
        if (is_divergent(e.loss)) {
            RunRecord r{k, e.loss, e.grad_fro, {}, elapsed()};
            for (const auto& l : group.layers()) {
                r.layers.push_back({l.name, std::numeric_limits<double>::quiet_NaN(), current_threshold(l.threshold), 0});
            }
            result.records.push_back(std::move(r));
            result.summary.diverged = true;
            result.summary.divergence_step = k;
            result.summary.steps_completed = k;
            result.summary.final_loss = e.loss;
            return result;
        }

        if (config.run.mc_bias_every > 0 && k % config.run.mc_bias_every == 0) {
            const Matrix exact = *objective->exact_gradient(params);
            const double tau = current_threshold(group.layer(0).threshold);
            BiasEstimate est = estimate_bias(
                exact, [&](Rng& rng) { return perturb(exact, config.noise, rng); }, cfg.clip, tau,
                config.run.mc_samples, bias_stream.derive(k));
            bias_sum += est.delta_hat;
            result.bias.push_back({k, est});
        }

        std::vector<Matrix> stochastic;
        stochastic.reserve(e.grads.size());
        for (std::size_t l = 0; l < e.grads.size(); ++l) {
            Rng rng = noise_stream.derive(k, l);
            stochastic.push_back(perturb(e.grads[l], config.noise, rng));
        }

        const bool recording = k % config.run.record_every == 0;
        cfg.track_sigma_max = recording;
        const auto reports = step(config.optim.kind, group, stochastic, cfg);
        if (recording) {
            RunRecord r{k, e.loss, e.grad_fro, {}, elapsed()};
            for (std::size_t l = 0; l < reports.size(); ++l) {
                r.layers.push_back({group.layer(l).name, reports[l].sigma_max_pre, reports[l].tau, reports[l].num_clamped});
            }
            result.records.push_back(std::move(r));
        }
    }

    result.summary.steps_completed = config.run.steps;
    result.summary.final_loss = objective->final_loss(group.params());
    if (is_divergent(result.summary.final_loss)) {
        result.summary.diverged = true;
        result.summary.divergence_step = config.run.steps;
    }
    if (!result.bias.empty()) result.summary.mean_bias = bias_sum / static_cast<double>(result.bias.size());
    return result;
}

// ---------------------------------------------------------------- sweep ----

struct GridPoint {
    double eta = 0.0;
    double tau = 0.0;
};

struct SweepCell {
    double eta = 0.0;
    double tau = 0.0;
    std::uint64_t seed = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    double log10_loss = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::string error;  // set when the cell threw
};

/// n values log-spaced over [lo, hi].
inline std::vector<double> log_space(double lo, double hi, std::size_t n) {
    if (n == 1) return {lo};
    std::vector<double> out(n);
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

inline std::vector<GridPoint> make_grid(std::span<const double> etas, std::span<const double> taus) {
    std::vector<GridPoint> grid;
    for (double eta : etas)
        for (double tau : taus) grid.push_back({eta, tau});
    return grid;
}

/// Configuration of one sweep cell: the base config with eta replaced and a
/// constant threshold tau.
inline ExperimentConfig cell_config(const ExperimentConfig& base, const GridPoint& p) {
    ExperimentConfig c = base;
    c.optim.step.eta = p.eta;
    c.optim.step.threshold.mode = ThresholdMode::constant;
    c.optim.step.threshold.tau = p.tau;
    return c;
}

inline SweepCell run_cell(const ExperimentConfig& base, const GridPoint& p, std::uint64_t seed) {
    SweepCell cell;
    cell.eta = p.eta;
    cell.tau = p.tau;
    cell.seed = seed;
    try {
        ExperimentConfig c = cell_config(base, p);
        c.run.record_every = c.run.steps;  // telemetry is not needed for a cell
        c.run.mc_bias_every = 0;
        const RunResult r = run(c, seed);
        cell.final_loss = r.summary.final_loss;
        cell.diverged = r.summary.diverged;
    } catch (const std::exception& ex) {
        cell.diverged = true;
        cell.error = ex.what();
    }
    cell.log10_loss = cell.diverged ? std::numeric_limits<double>::infinity() : std::log10(cell.final_loss);
    return cell;
}

/// One cell per (grid point, seed), ordered grid-major. Cells run on
/// `threads` workers (0 = hardware concurrency); results are identical to a
/// serial sweep.
inline std::vector<SweepCell> sweep(const ExperimentConfig& base, std::span<const GridPoint> grid,
                                    std::span<const std::uint64_t> seeds, unsigned threads = 0) {
    if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
    if (seeds.empty()) throw std::invalid_argument("sweep: no seeds");
    const std::size_t total = grid.size() * seeds.size();
    std::vector<SweepCell> cells(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < total; i = next++) {
            cells[i] = run_cell(base, grid[i / seeds.size()], seeds[i % seeds.size()]);
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, total));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return cells;
}

inline Table sweep_table(const std::vector<SweepCell>& cells) {
    Table t;
    t.header = {"eta", "tau", "seed", "final_loss", "log10_loss", "diverged"};
    for (const auto& c : cells) {
        t.rows.push_back({format_double(c.eta), format_double(c.tau), std::to_string(c.seed), format_double(c.final_loss),
                          format_double(c.log10_loss), c.diverged ? "1" : "0"});
    }
    return t;
}

inline Table bias_table(const std::vector<BiasRow>& rows) {
    Table t;
    t.header = {"step", "delta_hat", "delta_raw", "stderr", "mc_samples"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.step), format_double(r.estimate.delta_hat), format_double(r.estimate.delta_raw),
                          format_double(r.estimate.std_error), std::to_string(r.estimate.mc_samples)});
    }
    return t;
}

}  // namespace specclip
