// specclip command-line entry point.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 divergence (run).
// Every failure prints exactly one line to stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "specclip/specclip.hpp"

namespace fs = std::filesystem;
using namespace specclip;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) out.push_back(std::string(detail::trim(item)));
    return out;
}

double parse_real(const std::string& flag, const std::string& text) {
    double v = 0.0;
    if (!parse_double(text, v)) throw ConfigError(flag, "not a number: '" + text + "'");
    return v;
}

std::vector<double> parse_real_list(const std::string& flag, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(parse_real(flag, item));
    if (out.empty()) throw ConfigError(flag, "empty list");
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& flag, const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split(text, ',')) {
        const auto dots = item.find("..");
        try {
            if (dots == std::string::npos) {
                out.push_back(std::stoull(item));
            } else {
                const auto lo = std::stoull(item.substr(0, dots));
                const auto hi = std::stoull(item.substr(dots + 2));
                if (hi < lo) throw ConfigError(flag, "empty range '" + item + "'");
                for (auto s = lo; s <= hi; ++s) out.push_back(s);
            }
        } catch (const std::logic_error&) {
            throw ConfigError(flag, "bad seed '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(flag, "empty list");
    return out;
}

// "lo:hi:n" -> n log-spaced values.
std::vector<double> parse_axis(const std::string& flag, const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ConfigError(flag, "expected lo:hi:n, got '" + text + "'");
    const double lo = parse_real(flag, parts[0]);
    const double hi = parse_real(flag, parts[1]);
    const double n = parse_real(flag, parts[2]);
    if (!(lo > 0.0 && hi >= lo)) throw ConfigError(flag, "axis bounds must satisfy 0 < lo <= hi");
    if (!(n >= 1.0) || n != std::floor(n)) throw ConfigError(flag, "axis count must be a positive integer");
    return log_space(lo, hi, static_cast<std::size_t>(n));
}

// Parses a WxH matrix size such as 64x64.
std::pair<std::size_t, std::size_t> parse_dims(const std::string& text) {
    const auto parts = split(text, 'x');
    if (parts.size() != 2) throw ConfigError("--dims", "expected MxN, got '" + text + "'");
    try {
        const auto m = std::stoull(parts[0]);
        const auto n = std::stoull(parts[1]);
        if (m < 1 || n < 1) throw ConfigError("--dims", "dimensions must be >= 1");
        return {m, n};
    } catch (const std::logic_error&) {
        throw ConfigError("--dims", "expected MxN, got '" + text + "'");
    }
}

void write_summary(const RunSummary& s, std::uint64_t seed, const fs::path& path) {
    Table t;
    t.header = {"key", "value"};
    t.rows = {{"seed", std::to_string(seed)},
              {"steps_completed", std::to_string(s.steps_completed)},
              {"final_loss", format_double(s.final_loss)},
              {"diverged", s.diverged ? "1" : "0"},
              {"divergence_step", s.divergence_step ? std::to_string(*s.divergence_step) : ""},
              {"mean_bias", format_double(s.mean_bias)}};
    emit_csv(t, path.string());
}

struct Options {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

int cmd_run(const Options& o) {
    auto cfg = load_config(o.config);
    const std::uint64_t seed = o.seed_given ? o.seed : cfg.run.seed;
    const fs::path dir = o.out.empty() ? fs::path(cfg.run.out_dir) : fs::path(o.out);
    const RunResult r = run(cfg, seed);
    emit_csv(r.records, (dir / "run.csv").string());
    write_summary(r.summary, seed, dir / "summary.csv");
    write_text_file((dir / "config.cfg").string(), format_config(cfg));
    if (!r.bias.empty()) emit_csv(bias_table(r.bias), (dir / "bias.csv").string());
    if (r.summary.diverged) {
        std::cerr << "divergence: step " << *r.summary.divergence_step << ": loss "
                  << format_double(r.summary.final_loss) << '\n';
        return kExitDiverged;
    }
    std::cout << "final_loss " << format_double(r.summary.final_loss) << " steps " << r.summary.steps_completed
              << " out " << dir.string() << '\n';
    return kExitOk;
}

struct SweepOptions {
    std::string grid;
    std::string etas;
    std::string taus;
    std::string seeds = "0";
    unsigned threads = 0;
};

int cmd_sweep(const Options& o, const SweepOptions& s) {
    const auto cfg = load_config(o.config);
    std::vector<double> etas, taus;
    if (!s.grid.empty()) {
        const auto x = s.grid.find('x');
        if (x == std::string::npos) throw ConfigError("--grid", "expected etaLo:etaHi:n x tauLo:tauHi:m");
        etas = parse_axis("--grid", s.grid.substr(0, x));
        taus = parse_axis("--grid", s.grid.substr(x + 1));
    }
    if (!s.etas.empty()) etas = parse_real_list("--etas", s.etas);
    if (!s.taus.empty()) taus = parse_real_list("--taus", s.taus);
    if (etas.empty() || taus.empty()) throw ConfigError("--grid", "no grid given (use --grid or --etas/--taus)");
    const auto seeds = parse_seed_list("--seeds", s.seeds);
    const auto grid = make_grid(etas, taus);
    const auto cells = sweep(cfg, grid, seeds, s.threads);
    const fs::path dir = o.out.empty() ? fs::path(cfg.run.out_dir) : fs::path(o.out);
    emit_csv(sweep_table(cells), (dir / "sweep.csv").string());
    const auto ok = std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return !c.diverged; });
    std::cout << "cells " << cells.size() << " non_diverged " << ok << " out " << (dir / "sweep.csv").string()
              << '\n';
    return kExitOk;
}

int cmd_bias(const Options& o, const std::string& taus_text, std::size_t mc) {
    auto cfg = load_config(o.config);
    if (cfg.problem.kind == ProblemKind::mlp) {
        throw ConfigError("problem.kind", "bias needs an exact gradient (trace or quadratic problem)");
    }
    if (cfg.optim.step.clip.kind == ClipKind::none) throw ConfigError("optim.clip", "bias needs a clipper");
    if (mc < 2) throw ConfigError("--mc", "must be >= 2");
    const auto taus = parse_real_list("--taus", taus_text);
    for (double t : taus)
        if (!(t > 0.0)) throw ConfigError("--taus", "thresholds must be positive");
    const std::uint64_t seed = o.seed_given ? o.seed : cfg.run.seed;
    const auto objective = make_objective(cfg.problem, seed);
    const auto params = objective->initial_params();
    const std::vector<Matrix> x{params.front().second};
    const Matrix grad = *objective->exact_gradient(x);
    const auto curve = estimate_bias_curve(
        grad, [&](Rng& rng) { return perturb(grad, cfg.noise, rng); }, cfg.optim.step.clip, taus, mc,
        Rng(seed).derive(stream_tag::bias));
    Table t;
    t.header = {"tau", "delta_hat", "delta_raw", "stderr", "mc_samples"};
    for (std::size_t i = 0; i < taus.size(); ++i) {
        t.rows.push_back({format_double(taus[i]), format_double(curve[i].delta_hat), format_double(curve[i].delta_raw),
                          format_double(curve[i].std_error), std::to_string(curve[i].mc_samples)});
    }
    if (o.out.empty()) {
        std::cout << t.to_csv();
    } else {
        emit_csv(t, (fs::path(o.out) / "bias.csv").string());
    }
    return kExitOk;
}

int cmd_probe(const Options& o, const std::string& outliers, std::size_t topk, double shift) {
    auto cfg = load_config(o.config);
    if (cfg.problem.kind != ProblemKind::mlp) throw ConfigError("problem.kind", "probe runs on the mlp problem");
    OutlierSpec spec;
    spec.counts.clear();
    for (double c : parse_real_list("--outliers", outliers)) {
        if (c < 0 || c != std::floor(c)) throw ConfigError("--outliers", "counts must be non-negative integers");
        if (c > static_cast<double>(cfg.problem.batch_size)) throw ConfigError("--outliers", "more outliers than batch");
        spec.counts.push_back(static_cast<std::size_t>(c));
    }
    spec.target_shift = shift;
    if (topk < 1 || topk > cfg.problem.hidden || topk > cfg.problem.input_dim) {
        throw ConfigError("--topk", "must lie in [1, min layer dim]");
    }
    const std::uint64_t seed = o.seed_given ? o.seed : cfg.run.seed;
    const Rng root(seed);
    const MlpShape shape{cfg.problem.input_dim, cfg.problem.hidden};
    const auto weights = make_mlp(shape, root.derive(stream_tag::init).next_u64()).weights;
    const auto clean = sample_batch(shape, cfg.problem.batch_size, root.derive(stream_tag::batch).next_u64());
    const auto snaps = spectrum_probe(weights, clean, spec, topk, root.derive(stream_tag::noise).next_u64());
    Table t;
    t.header = {"layer", "outliers", "index", "sigma"};
    for (const auto& s : snaps)
        for (std::size_t i = 0; i < s.top_k_sigmas.size(); ++i)
            t.rows.push_back({s.layer, std::to_string(s.outlier_count), std::to_string(i), format_double(s.top_k_sigmas[i])});
    if (o.out.empty()) {
        std::cout << t.to_csv();
    } else {
        emit_csv(t, (fs::path(o.out) / "probe.csv").string());
    }
    return kExitOk;
}

int cmd_svd_bench(const Options& o, const std::string& dims, std::size_t rank, std::size_t power_iters,
                  std::size_t oversample, double decay, std::size_t reps) {
    const auto [m, n] = parse_dims(dims);
    if (rank < 1 || rank > std::min(m, n)) throw ConfigError("--rank", "must lie in [1, min(M, N)]");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("--decay", "must lie in (0, 1]");
    const auto rep = svd_bench(m, n, {rank, power_iters, oversample}, decay, o.seed, reps);
    Table t;
    t.header = {"index", "sigma_full", "sigma_truncated", "rel_error"};
    for (std::size_t i = 0; i < rank; ++i) {
        const double rel = std::abs(rep.sigma_truncated[i] - rep.sigma_full[i]) / rep.sigma_full[i];
        t.rows.push_back({std::to_string(i), format_double(rep.sigma_full[i]), format_double(rep.sigma_truncated[i]),
                          format_double(rel)});
    }
    if (!o.out.empty()) emit_csv(t, (fs::path(o.out) / "svd_bench.csv").string());
    std::cout << "dims " << m << "x" << n << " rank " << rank << " power_iters " << power_iters << " max_rel_error "
              << format_double(rep.max_rel_error) << " full_ms " << format_double(rep.full_ns / 1e6)
              << " truncated_ms " << format_double(rep.truncated_ns / 1e6) << '\n';
    if (o.out.empty()) std::cout << t.to_csv();
    return kExitOk;
}

struct PlotOptionsCli {
    std::string csv;
    std::string x;
    std::vector<std::string> y;
    std::string group;
    bool log_y = false;
    bool log_x = false;
    std::string title;
};

int cmd_plot(const Options& o, const PlotOptionsCli& p) {
    const Table t = Table::from_csv(read_text_file(p.csv));
    const auto xs = t.column_values(p.x);
    std::vector<Series> series;
    const auto to_real = [&](const std::string& col, const std::string& v) {
        double d = 0.0;
        if (!parse_double(v, d)) throw ConfigError(col, "non-numeric value '" + v + "' in " + p.csv);
        return d;
    };
    for (const auto& ycol : p.y) {
        const auto ys = t.column_values(ycol);
        if (p.group.empty()) {
            Series s{ycol, {}, {}};
            for (std::size_t i = 0; i < xs.size(); ++i) {
                s.x.push_back(to_real(p.x, xs[i]));
                s.y.push_back(to_real(ycol, ys[i]));
            }
            series.push_back(std::move(s));
            continue;
        }
        const auto groups = t.column_values(p.group);
        std::vector<std::string> order;
        for (const auto& g : groups)
            if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
        for (const auto& g : order) {
            Series s{p.y.size() > 1 ? ycol + " " + g : g, {}, {}};
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (groups[i] != g) continue;
                s.x.push_back(to_real(p.x, xs[i]));
                s.y.push_back(to_real(ycol, ys[i]));
            }
            series.push_back(std::move(s));
        }
    }
    PlotOptions opt;
    opt.log_x = p.log_x;
    opt.log_y = p.log_y;
    opt.title = p.title;
    opt.x_label = p.x;
    opt.y_label = p.y.size() == 1 ? p.y.front() : "value";
    const std::string out = o.out.empty() ? fs::path(p.csv).replace_extension(".svg").string() : o.out;
    emit_svg_lineplot(series, out, opt);
    std::cout << "wrote " << out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral gradient clipping experiments"};
    app.set_version_flag("--version", std::string("specclip ") + kVersion);
    app.require_subcommand(1);

    Options opts;
    const auto add_seed = [&](CLI::App* sub) {
        sub->add_option_function<std::uint64_t>(
               "--seed",
               [&](std::uint64_t s) {
                   opts.seed = s;
                   opts.seed_given = true;
               },
               "Random seed (overrides run.seed)");
    };

    auto* run_cmd = app.add_subcommand("run", "Run one experiment and write run.csv and summary.csv");
    run_cmd->add_option("--config", opts.config, "Config file")->required();
    add_seed(run_cmd);
    run_cmd->add_option("--out", opts.out, "Output directory (default: run.out_dir)");

    SweepOptions sweep_opts;
    auto* sweep_cmd = app.add_subcommand("sweep", "Constant-threshold (eta, tau) sweep; writes sweep.csv");
    sweep_cmd->add_option("--config", opts.config, "Base config file")->required();
    sweep_cmd->add_option("--grid", sweep_opts.grid, "Log-spaced grid etaLo:etaHi:nEta x tauLo:tauHi:nTau");
    sweep_cmd->add_option("--etas", sweep_opts.etas, "Explicit comma-separated step sizes");
    sweep_cmd->add_option("--taus", sweep_opts.taus, "Explicit comma-separated thresholds");
    sweep_cmd->add_option("--seeds", sweep_opts.seeds, "Seeds, e.g. 0,1,2 or 0..2")->capture_default_str();
    sweep_cmd->add_option("--threads", sweep_opts.threads, "Worker threads (0 = all cores)")->capture_default_str();
    sweep_cmd->add_option("--out", opts.out, "Output directory (default: run.out_dir)");
    add_seed(sweep_cmd);

    std::string bias_taus = "0.01,0.1,1,10,100";
    std::size_t bias_mc = 256;
    auto* bias_cmd = app.add_subcommand("bias", "Monte-Carlo clipping bias at the initial point across thresholds");
    bias_cmd->add_option("--config", opts.config, "Config file (trace or quadratic problem)")->required();
    bias_cmd->add_option("--taus", bias_taus, "Comma-separated thresholds")->capture_default_str();
    bias_cmd->add_option("--mc", bias_mc, "Monte-Carlo samples")->capture_default_str();
    bias_cmd->add_option("--out", opts.out, "Output directory (default: CSV on stdout)");
    add_seed(bias_cmd);

    std::string probe_outliers = "0,1,4";
    std::size_t probe_topk = 15;
    double probe_shift = 10.0;
    auto* probe_cmd = app.add_subcommand("probe", "Per-layer gradient spectra with corrupted samples (mlp)");
    probe_cmd->add_option("--config", opts.config, "Config file (mlp problem)")->required();
    probe_cmd->add_option("--outliers", probe_outliers, "Comma-separated outlier counts")->capture_default_str();
    probe_cmd->add_option("--topk", probe_topk, "Singular values kept per layer")->capture_default_str();
    probe_cmd->add_option("--shift", probe_shift, "Target shift of corrupted samples")->capture_default_str();
    probe_cmd->add_option("--out", opts.out, "Output directory (default: CSV on stdout)");
    add_seed(probe_cmd);

    std::string bench_dims = "64x64";
    std::size_t bench_rank = 10, bench_power = 1, bench_oversample = 5, bench_reps = 3;
    double bench_decay = 0.7;
    auto* bench_cmd = app.add_subcommand("svd-bench", "Compare svd_full and svd_truncated on a geometric spectrum");
    bench_cmd->add_option("--dims", bench_dims, "Matrix size MxN")->capture_default_str();
    bench_cmd->add_option("--rank", bench_rank, "Truncation rank")->capture_default_str();
    bench_cmd->add_option("--power-iters", bench_power, "Power iterations")->capture_default_str();
    bench_cmd->add_option("--oversample", bench_oversample, "Sketch oversampling")->capture_default_str();
    bench_cmd->add_option("--decay", bench_decay, "Spectrum ratio sigma[i+1]/sigma[i]")->capture_default_str();
    bench_cmd->add_option("--reps", bench_reps, "Timing repetitions")->capture_default_str();
    bench_cmd->add_option("--out", opts.out, "Output directory for svd_bench.csv");
    add_seed(bench_cmd);

    PlotOptionsCli plot_opts;
    auto* plot_cmd = app.add_subcommand("plot", "Line plot of CSV columns as SVG");
    plot_cmd->add_option("--csv", plot_opts.csv, "Input CSV")->required();
    plot_cmd->add_option("--x", plot_opts.x, "x column")->required();
    plot_cmd->add_option("--y", plot_opts.y, "y column(s)")->required();
    plot_cmd->add_option("--group", plot_opts.group, "Split series by this column (e.g. layer)");
    plot_cmd->add_flag("--log", plot_opts.log_y, "Log-scale y axis");
    plot_cmd->add_flag("--logx", plot_opts.log_x, "Log-scale x axis");
    plot_cmd->add_option("--title", plot_opts.title, "Chart title");
    plot_cmd->add_option("--out", opts.out, "Output SVG path (default: CSV path with .svg)");
    add_seed(plot_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << app.help();
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "config error: cli: " << msg << '\n';
        return kExitConfig;
    }

    try {
        if (*run_cmd) return cmd_run(opts);
        if (*sweep_cmd) return cmd_sweep(opts, sweep_opts);
        if (*bias_cmd) return cmd_bias(opts, bias_taus, bias_mc);
        if (*probe_cmd) return cmd_probe(opts, probe_outliers, probe_topk, probe_shift);
        if (*bench_cmd) return cmd_svd_bench(opts, bench_dims, bench_rank, bench_power, bench_oversample, bench_decay,
                                             bench_reps);
        if (*plot_cmd) return cmd_plot(opts, plot_opts);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
