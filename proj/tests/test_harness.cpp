#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "specclip/harness/run.hpp"
#include "specclip/harness/svg.hpp"

using namespace specclip;

namespace {

ExperimentConfig small_trace() {
    ExperimentConfig c;
    c.problem.kind = ProblemKind::trace;
    c.problem.n = 5;
    c.problem.N = 40;
    c.optim.step.eta = 0.02;
    c.optim.step.clip.kind = ClipKind::spectral_exact;
    c.optim.step.threshold.mode = ThresholdMode::ema;
    c.noise = {NoiseKind::pareto_rank_one, 0.1, 1.1, 2.0};
    c.run.steps = 200;
    return c;
}

ExperimentConfig small_mlp() {
    ExperimentConfig c;
    c.problem.input_dim = 12;
    c.problem.hidden = 12;
    c.problem.batch_size = 16;
    c.problem.eval_batch = 64;
    c.optim.step.eta = 0.01;
    c.optim.step.clip.kind = ClipKind::spectral_truncated;
    c.optim.step.clip.rank = 3;
    c.optim.step.threshold.mode = ThresholdMode::quantile;
    c.optim.step.threshold.w = 20;
    c.noise = {NoiseKind::pareto_rank_one, 0.1, 1.1, 2.0};
    c.run.steps = 60;
    c.run.record_every = 5;
    return c;
}

// CSV text without the trailing wall_ns column.
std::string without_wall_time(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("specclip_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    ExperimentConfig c = small_mlp();
    c.optim.step.threshold.tau = 3.891;
    const auto back = parse_config(format_config(c));
    EXPECT_EQ(format_config(back), format_config(c));
    EXPECT_DOUBLE_EQ(back.optim.step.threshold.tau, 3.891);
}

TEST(Config, ParsesDocumentedKeys) {
    const auto c = parse_config(R"(
# SGDM with a constant spectral threshold
problem.kind = mlp
problem.batch_size = 64
optim.kind = sgdm
optim.eta = 3.56e-3
optim.clip = spectral
optim.tau = 0.891
noise.kind = pareto
run.steps = 30000
run.seed = 7
)");
    EXPECT_EQ(c.optim.step.threshold.mode, ThresholdMode::constant);
    EXPECT_DOUBLE_EQ(c.optim.step.eta, 3.56e-3);
    EXPECT_DOUBLE_EQ(c.optim.step.threshold.tau, 0.891);
    EXPECT_EQ(c.noise.kind, NoiseKind::pareto_rank_one);
    EXPECT_EQ(c.problem.batch_size, 64u);
    EXPECT_EQ(c.run.seed, 7u);
}

TEST(Config, ErrorsNameTheField) {
    const auto field_of = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    EXPECT_EQ(field_of("optim.eta = -1\n"), "optim.eta");
    EXPECT_EQ(field_of("optim.clip = fancy\n"), "optim.clip");
    EXPECT_EQ(field_of("run.steps = 0\n"), "run.steps");
    EXPECT_EQ(field_of("run.bogus = 1\n"), "run.bogus");
    EXPECT_EQ(field_of("problem.n = 2.5\n"), "problem.n");
    EXPECT_EQ(field_of("optim.eta = 1\noptim.eta = 2\n"), "optim.eta");
    EXPECT_THROW(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST(Records, EmptyIsHeaderOnly) {
    EXPECT_EQ(format_run_csv({}), std::string(kRunCsvHeader) + "\n");
}

TEST(Records, RoundTripFullPrecision) {
    std::vector<RunRecord> recs = {
        {0, 1.0 / 3.0, std::sqrt(2.0), {{"W1", 0.1 + 0.2, kInf, 3}, {"W2", std::nan(""), 1e-300, 0}}, 17},
        {10, 5e-324, 123456.789, {{"W1", 2.0 / 7.0, 0.891, 0}, {"W2", 1e300, 3.891, 1}}, 42}};
    const auto back = parse_run_csv(format_run_csv(recs));
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].step, recs[i].step);
        EXPECT_EQ(back[i].loss, recs[i].loss);
        EXPECT_EQ(back[i].grad_fro, recs[i].grad_fro);
        EXPECT_EQ(back[i].wall_ns, recs[i].wall_ns);
        ASSERT_EQ(back[i].layers.size(), 2u);
        for (std::size_t l = 0; l < 2; ++l) {
            EXPECT_EQ(back[i].layers[l].layer, recs[i].layers[l].layer);
            const double a = back[i].layers[l].sigma_max, b = recs[i].layers[l].sigma_max;
            EXPECT_TRUE(a == b || (std::isnan(a) && std::isnan(b)));
            EXPECT_EQ(back[i].layers[l].tau, recs[i].layers[l].tau);
            EXPECT_EQ(back[i].layers[l].num_clamped, recs[i].layers[l].num_clamped);
        }
    }
}

TEST(Records, EmitCreatesDirectoriesAndReportsFailures) {
    const auto dir = temp_dir("emit");
    emit_csv(std::vector<RunRecord>{}, (dir / "a" / "run.csv").string());
    EXPECT_EQ(read_text_file((dir / "a" / "run.csv").string()), std::string(kRunCsvHeader) + "\n");
    EXPECT_THROW(emit_csv(std::vector<RunRecord>{}, "/proc/nope/run.csv"), IoError);
}

TEST(Run, SingleStepSingleRecord) {
    auto c = small_trace();
    c.run.steps = 1;
    c.run.record_every = 1;
    const auto r = run(c, 0);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].step, 0u);
    EXPECT_EQ(r.summary.steps_completed, 1u);
}

TEST(Run, RecordsAreStrictlyIncreasing) {
    const auto r = run(small_mlp(), 3);
    ASSERT_EQ(r.records.size(), 12u);
    for (std::size_t i = 1; i < r.records.size(); ++i) EXPECT_GT(r.records[i].step, r.records[i - 1].step);
    for (const auto& rec : r.records) EXPECT_EQ(rec.layers.size(), 4u);
    EXPECT_FALSE(r.summary.diverged);
}

TEST(Run, DeterministicCsv) {
    for (const auto& c : {small_trace(), small_mlp()}) {
        const auto a = format_run_csv(run(c, 11).records);
        const auto b = format_run_csv(run(c, 11).records);
        EXPECT_EQ(without_wall_time(a), without_wall_time(b));
        EXPECT_NE(without_wall_time(a), without_wall_time(format_run_csv(run(c, 12).records)));
    }
}

TEST(Run, DivergenceIsReportedWithStep) {
    auto c = small_trace();
    c.optim.step.clip.kind = ClipKind::none;
    c.optim.step.eta = 50.0;
    const auto r = run(c, 0);
    ASSERT_TRUE(r.summary.diverged);
    ASSERT_TRUE(r.summary.divergence_step.has_value());
    EXPECT_LT(*r.summary.divergence_step, c.run.steps);
    EXPECT_TRUE(is_divergent(r.records.back().loss));
}

TEST(Run, BiasRowsOnTrace) {
    auto c = small_trace();
    c.run.steps = 20;
    c.run.mc_bias_every = 10;
    c.run.mc_samples = 16;
    const auto r = run(c, 1);
    ASSERT_EQ(r.bias.size(), 2u);
    EXPECT_EQ(r.bias[1].step, 10u);
    EXPECT_TRUE(std::isfinite(r.summary.mean_bias));
}

TEST(Run, QuadraticConverges) {
    ExperimentConfig c;
    c.problem.kind = ProblemKind::quadratic;
    c.problem.n = 4;
    c.optim.kind = OptimizerKind::sgd;
    c.optim.step.eta = 0.2;
    c.run.steps = 300;
    EXPECT_LT(run(c, 0).summary.final_loss, 1e-10);
}

TEST(Sweep, OneByOneEqualsRun) {
    const auto base = small_trace();
    const GridPoint grid[] = {{0.02, 1.5}};
    const std::uint64_t seeds[] = {4};
    const auto cells = sweep(base, grid, seeds, 1);
    ASSERT_EQ(cells.size(), 1u);
    const auto direct = run(cell_config(base, grid[0]), 4);
    EXPECT_EQ(cells[0].final_loss, direct.summary.final_loss);
    EXPECT_EQ(cells[0].diverged, direct.summary.diverged);
}

TEST(Sweep, OrderIndependentAndParallelSafe) {
    const auto base = small_trace();
    const auto etas = log_space(1e-3, 1.0, 3);
    const auto taus = log_space(0.1, 10.0, 3);
    auto grid = make_grid(etas, taus);
    const std::uint64_t seeds[] = {1, 2};
    const auto serial = sweep(base, grid, seeds, 1);
    const auto parallel = sweep(base, grid, seeds, 4);
    EXPECT_EQ(sweep_table(serial).to_csv(), sweep_table(parallel).to_csv());

    std::reverse(grid.begin(), grid.end());
    const auto reversed = sweep(base, grid, seeds, 2);
    for (const auto& cell : serial) {
        const auto it = std::find_if(reversed.begin(), reversed.end(), [&](const SweepCell& o) {
            return o.eta == cell.eta && o.tau == cell.tau && o.seed == cell.seed;
        });
        ASSERT_NE(it, reversed.end());
        EXPECT_EQ(it->final_loss, cell.final_loss);
    }
}

TEST(Sweep, FailedCellsAreFlaggedNotFatal) {
    const auto base = small_trace();
    const GridPoint grid[] = {{0.02, -1.0}, {0.02, 1.0}};  // negative tau is invalid
    const std::uint64_t seeds[] = {0};
    const auto cells = sweep(base, grid, seeds, 1);
    EXPECT_TRUE(cells[0].diverged);
    EXPECT_FALSE(cells[0].error.empty());
    EXPECT_TRUE(cells[1].error.empty());
    EXPECT_THROW(sweep(base, std::span<const GridPoint>{}, seeds, 1), std::invalid_argument);
}

TEST(LogSpace, Endpoints) {
    const auto v = log_space(1e-4, 1e-1, 4);
    EXPECT_NEAR(v.front(), 1e-4, 1e-18);
    EXPECT_NEAR(v[1], 1e-3, 1e-15);
    EXPECT_NEAR(v.back(), 1e-1, 1e-15);
}

TEST(Svg, TwoSeriesTwoPolylines) {
    const std::vector<Series> s = {{"a", {1, 2, 3}, {1, 4, 9}}, {"b", {1, 2, 3}, {2, 3, 4}}};
    const auto svg = render_svg_lineplot(s, {true, true, "t"});
    std::size_t count = 0;
    for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++count;
    EXPECT_EQ(count, 2u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_THROW(render_svg_lineplot({{"bad", {1, 2}, {1}}}), std::invalid_argument);
}
