#include <gtest/gtest.h>

#include <cmath>

#include "specclip/optim.hpp"
#include "specclip/problems.hpp"

using namespace specclip;

namespace {

StepConfig constant_clip(ClipKind kind, double tau, double eta = 0.1) {
    StepConfig cfg;
    cfg.eta = eta;
    cfg.clip.kind = kind;
    cfg.threshold.mode = ThresholdMode::constant;
    cfg.threshold.tau = tau;
    return cfg;
}

ParamGroup single(const Matrix& x, const ThresholdSpec& t) { return ParamGroup({{"X", x}}, t); }

}  // namespace

TEST(StepSgd, DiagonalClampExample) {
    const auto cfg = constant_clip(ClipKind::spectral_exact, 2.0);
    auto g = single(Matrix(2, 2), cfg.threshold);
    const Matrix grad[] = {Matrix::diagonal({5, 1})};
    const auto rep = step_sgd(g, grad, cfg);
    EXPECT_LT(max_abs_diff(g.layer(0).param, Matrix::diagonal({-0.2, -0.1})), 1e-15);
    EXPECT_EQ(rep[0].num_clamped, 1u);
}

TEST(StepSgd, NoClipIsPlainSgd) {
    StepConfig cfg;
    cfg.eta = 0.3;
    Rng rng(1);
    const Matrix x0 = Matrix::gaussian(3, 2, rng);
    const Matrix grad[] = {Matrix::gaussian(3, 2, rng)};
    auto g = single(x0, cfg.threshold);
    step_sgd(g, grad, cfg);
    EXPECT_LE(max_abs_diff(g.layer(0).param, x0 - 0.3 * grad[0]), 1e-15);
}

TEST(StepSgd, InfiniteTauMatchesNoClipOnTraceRegression) {
    const auto inst = make_trace_instance(6, 40, 2, 5);
    auto a_cfg = constant_clip(ClipKind::spectral_exact, kInf, 0.05);
    StepConfig b_cfg;
    b_cfg.eta = 0.05;
    auto a = single(Matrix(6, 6), a_cfg.threshold);
    auto b = single(Matrix(6, 6), b_cfg.threshold);
    for (int k = 0; k < 100; ++k) {
        const Matrix ga[] = {eval_gradient(inst, a.layer(0).param)};
        const Matrix gb[] = {eval_gradient(inst, b.layer(0).param)};
        step_sgd(a, ga, a_cfg);
        step_sgd(b, gb, b_cfg);
    }
    EXPECT_LE(max_abs_diff(a.layer(0).param, b.layer(0).param), 1e-12);
}

TEST(StepSgd, ShapeMismatchThrows) {
    StepConfig cfg;
    auto g = single(Matrix(2, 2), cfg.threshold);
    const Matrix bad[] = {Matrix(2, 3)};
    EXPECT_THROW(step_sgd(g, bad, cfg), ShapeError);
    const Matrix two[] = {Matrix(2, 2), Matrix(2, 2)};
    EXPECT_THROW(step_sgd(g, two, cfg), ShapeError);
}

TEST(StepSgdm, FirstStepFromZeroMomentum) {
    StepConfig cfg;
    cfg.eta = 1.0;
    cfg.beta = 0.9;
    auto g = single(Matrix(2, 2), cfg.threshold);
    const Matrix grad[] = {Matrix::identity(2)};
    step_sgdm(g, grad, cfg);
    EXPECT_LT(max_abs_diff(g.layer(0).momentum, 0.1 * Matrix::identity(2)), 1e-15);
    EXPECT_LT(max_abs_diff(g.layer(0).param, -0.1 * Matrix::identity(2)), 1e-15);
}

TEST(StepSgdm, BetaZeroEqualsSgdWithLag) {
    Rng rng(2);
    StepConfig cfg;
    cfg.eta = 0.05;
    cfg.beta = 0.0;
    cfg.clip.kind = ClipKind::spectral_exact;
    cfg.threshold.mode = ThresholdMode::ema;
    auto a = single(Matrix(4, 3), cfg.threshold);
    auto b = single(Matrix(4, 3), cfg.threshold);
    for (int k = 0; k < 30; ++k) {
        const Matrix grad[] = {Matrix::gaussian(4, 3, rng, 1.0 + k % 3)};
        step_sgdm(a, grad, cfg);
        step_sgd(b, grad, cfg);
        ASSERT_LE(max_abs_diff(a.layer(0).param, b.layer(0).param), 1e-14);
    }
}

TEST(StepSgdm, EmaOfConstantStreamIsOne) {
    StepConfig cfg;
    cfg.eta = 0.01;
    cfg.clip.kind = ClipKind::spectral_exact;
    cfg.threshold.mode = ThresholdMode::ema;
    cfg.threshold.theta = 0.9;
    auto g = single(Matrix(2, 2), cfg.threshold);
    const Matrix grad[] = {Matrix::diagonal({1.0, 0.5})};
    for (int k = 0; k < 50; ++k) {
        const auto rep = step_sgdm(g, grad, cfg);
        if (k > 0) {
            ASSERT_NEAR(rep[0].tau, 1.0, 1e-12);  // tau used at step k is tau_{k-1}
        } else {
            ASSERT_EQ(rep[0].tau, kInf);  // warm-up step runs unclipped
        }
        ASSERT_NEAR(current_threshold(g.layer(0).threshold), 1.0, 1e-12);
    }
}

TEST(StepAdam, FirstStepMagnitudeIsEta) {
    StepConfig cfg;
    cfg.eta = 1e-3;
    auto g = single(Matrix(2, 2), cfg.threshold);
    const Matrix grad[] = {Matrix::identity(2)};
    step_adam(g, grad, cfg);
    const auto& x = g.layer(0).param;
    EXPECT_NEAR(x(0, 0), -1e-3, 1e-10);
    EXPECT_NEAR(x(1, 1), -1e-3, 1e-10);
    EXPECT_EQ(x(0, 1), 0.0);
}

// Independent naive loops for the unclipped steppers on a 4x4 quadratic.
TEST(Steppers, DisabledClipMatchesNaiveLoops) {
    const auto prob = QuadraticProblem::make(4, 4, 3);
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::sgdm, OptimizerKind::adam}) {
        StepConfig cfg;
        cfg.eta = kind == OptimizerKind::adam ? 0.01 : 0.05;
        auto group = single(Matrix(4, 4), cfg.threshold);
        std::vector<double> x(16, 0.0), m(16, 0.0), v(16, 0.0);
        for (int k = 0; k < 50; ++k) {
            Matrix xm(4, 4, x);
            const Matrix grad = eval_gradient(prob, xm);
            const Matrix gs[] = {eval_gradient(prob, group.layer(0).param)};
            step(kind, group, gs, cfg);
            for (std::size_t i = 0; i < 16; ++i) {
                const double gi = grad.values()[i];
                if (kind == OptimizerKind::sgd) {
                    x[i] -= cfg.eta * gi;
                } else if (kind == OptimizerKind::sgdm) {
                    m[i] = cfg.beta * m[i] + (1 - cfg.beta) * gi;
                    x[i] -= cfg.eta * m[i];
                } else {
                    m[i] = cfg.beta * m[i] + (1 - cfg.beta) * gi;
                    v[i] = cfg.adam_beta2 * v[i] + (1 - cfg.adam_beta2) * gi * gi;
                    const double mh = m[i] / (1 - std::pow(cfg.beta, k + 1));
                    const double vh = v[i] / (1 - std::pow(cfg.adam_beta2, k + 1));
                    x[i] -= cfg.eta * mh / (std::sqrt(vh) + cfg.adam_eps);
                }
            }
            ASSERT_LE(max_abs_diff(group.layer(0).param, Matrix(4, 4, x)), 1e-12) << "step " << k;
        }
    }
}

TEST(Steppers, ColumnVectorSpectralEqualsNorm) {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::sgdm, OptimizerKind::adam}) {
        const auto cs = constant_clip(ClipKind::spectral_exact, 0.7, 0.05);
        const auto cn = constant_clip(ClipKind::norm, 0.7, 0.05);
        auto a = single(Matrix(2, 1), cs.threshold);
        auto b = single(Matrix(2, 1), cn.threshold);
        Rng rng(10);
        for (int k = 0; k < 50; ++k) {
            const Matrix grad[] = {Matrix::gaussian(2, 1, rng)};
            step(kind, a, grad, cs);
            step(kind, b, grad, cn);
        }
        EXPECT_LE(max_abs_diff(a.layer(0).param, b.layer(0).param), 1e-12);
    }
}

TEST(Steppers, ClippedUpdateRespectsTau) {
    Rng rng(12);
    for (auto clip : {ClipKind::spectral_exact, ClipKind::spectral_truncated}) {
        StepConfig cfg;
        cfg.eta = 0.01;
        cfg.clip.kind = clip;
        cfg.clip.rank = 4;
        cfg.threshold.mode = ThresholdMode::quantile;
        cfg.threshold.w = 10;
        auto g = single(Matrix(8, 6), cfg.threshold);
        for (int k = 0; k < 40; ++k) {
            const Matrix grad[] = {Matrix::gaussian(8, 6, rng, 1.0 + 3.0 * (k % 5 == 0))};
            const auto rep = step_sgd(g, grad, cfg);
            if (std::isfinite(rep[0].tau) && clip == ClipKind::spectral_exact) {
                ASSERT_LE(spectral_norm(rep[0].clipped), rep[0].tau * (1 + 1e-8));
            }
        }
    }
}

TEST(Steppers, LayerwiseThresholdsAreIndependent) {
    StepConfig cfg;
    cfg.eta = 0.01;
    cfg.clip.kind = ClipKind::spectral_exact;
    cfg.threshold.mode = ThresholdMode::ema;
    ParamGroup g({{"a", Matrix(2, 2)}, {"b", Matrix(3, 2)}}, cfg.threshold);
    const Matrix grads[] = {Matrix::diagonal({4, 1}), Matrix{{1, 0}, {0, 0}, {0, 0}}};
    step_sgd(g, grads, cfg);
    EXPECT_NEAR(current_threshold(g.layer(0).threshold), 4.0, 1e-12);
    EXPECT_NEAR(current_threshold(g.layer(1).threshold), 1.0, 1e-12);
}

TEST(StepConfig, Validates) {
    StepConfig cfg;
    cfg.eta = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.eta = 1;
    cfg.beta = 1;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
