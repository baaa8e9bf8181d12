#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "specclip/noise.hpp"
#include "specclip/svd.hpp"

using namespace specclip;

TEST(Pareto, BoundaryAndSupport) {
    EXPECT_EQ(pareto_from_uniform(1.1, 2.0, 1.0), 2.0);
    Rng rng(1);
    for (int i = 0; i < 1000000; ++i) ASSERT_GE(sample_pareto(1.1, 2.0, rng), 2.0);
    EXPECT_THROW(sample_pareto(0.0, 1.0, rng), std::invalid_argument);
}

// E[min(X, c)] for Pareto(alpha, x_m) equals
// x_m + x_m^alpha (c^(1-alpha) - x_m^(1-alpha)) / (1 - alpha).
TEST(Pareto, CappedMeanMatchesAnalytic) {
    const double a = 1.1, xm = 2.0, cap = 1e6;
    const double analytic = xm + std::pow(xm, a) * (std::pow(cap, 1 - a) - std::pow(xm, 1 - a)) / (1 - a);
    Rng rng(2);
    double s = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) s += std::min(sample_pareto(a, xm, rng), cap);
    EXPECT_NEAR(s / n, analytic, 0.2 * analytic);
}

TEST(Pareto, KolmogorovSmirnov) {
    const double a = 1.1, xm = 2.0;
    Rng rng(3);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = sample_pareto(a, xm, rng);
    std::sort(xs.begin(), xs.end());
    double d = 0;
    const auto n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double cdf = 1 - std::pow(xm / xs[i], a);
        d = std::max({d, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
    }
    EXPECT_LE(d, 0.01);
}

TEST(Perturb, ProbZeroLeavesGradient) {
    NoiseModel m{NoiseKind::pareto_rank_one, 0.0};
    Rng rng(4);
    const Matrix g = Matrix::gaussian(5, 4, rng);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(perturb(g, m, rng), g);
}

TEST(Perturb, ProbOneIsRankOneWithMagnitudeS) {
    NoiseModel m{NoiseKind::pareto_rank_one, 1.0};
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto p = draw_perturbation(6, 4, m, rng);
        ASSERT_TRUE(p.activated);
        const auto f = svd_full(p.delta);
        ASSERT_LE(f.sigma[1], 1e-10 * p.magnitude);
        ASSERT_NEAR(frobenius_norm(p.delta), p.magnitude, 1e-12 * p.magnitude);
    }
}

TEST(Perturb, ActivationFrequencyAndSignSymmetry) {
    NoiseModel m{NoiseKind::pareto_rank_one, 0.1};
    const Rng root(6);
    int fired = 0;
    double sign_sum = 0;
    for (int k = 0; k < 100000; ++k) {
        Rng rng = root.derive(k);
        const auto p = draw_perturbation(2, 2, m, rng);
        fired += p.activated;
    }
    EXPECT_GE(fired, 9400);
    EXPECT_LE(fired, 10600);
    NoiseModel always{NoiseKind::pareto_rank_one, 1.0};
    for (int k = 0; k < 100000; ++k) {
        Rng rng = root.derive(1u << 20, k);
        sign_sum += draw_perturbation(1, 1, always, rng).sign;
    }
    EXPECT_LE(std::abs(sign_sum / 100000), 0.02);
}

TEST(Perturb, GaussianAndNone) {
    Rng rng(7);
    const Matrix g(3, 3);
    EXPECT_EQ(perturb(g, NoiseModel{}, rng), g);
    NoiseModel gauss{NoiseKind::gaussian};
    gauss.gaussian_std = 0.5;
    EXPECT_NE(perturb(g, gauss, rng), g);
    gauss.gaussian_std = -1;
    EXPECT_THROW(gauss.validate(), std::invalid_argument);
}

TEST(Perturb, DeterministicPerStream) {
    NoiseModel m{NoiseKind::pareto_rank_one, 0.5};
    Rng a(9), b(9);
    const Matrix g(4, 4);
    for (int i = 0; i < 50; ++i) ASSERT_EQ(perturb(g, m, a), perturb(g, m, b));
}
