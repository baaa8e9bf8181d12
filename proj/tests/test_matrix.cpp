#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "specclip/matrix.hpp"

using namespace specclip;

TEST(Matrix, ConstructsZeros) {
    Matrix m(2, 3);
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    for (double v : m.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matrix, RejectsBadData) {
    EXPECT_THROW(Matrix(2, 2, {1, 2, 3}), ShapeError);
    EXPECT_THROW(Matrix(1, 2, {1, std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
    EXPECT_THROW(Matrix(1, 1, {std::numeric_limits<double>::infinity()}), std::invalid_argument);
}

TEST(Matrix, InitializerRows) {
    const Matrix m{{1, 2}, {3, 4}, {5, 6}};
    EXPECT_EQ(m.rows(), 3u);
    EXPECT_EQ(m(2, 1), 6.0);
}

TEST(Matrix, MatmulAgainstNaiveLoop) {
    Rng rng(1);
    const Matrix a = Matrix::gaussian(4, 5, rng);
    const Matrix b = Matrix::gaussian(5, 3, rng);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
            EXPECT_NEAR(c(i, j), s, 1e-14);
        }
    EXPECT_LT(max_abs_diff(matmul_tn(transpose(a), b), c), 1e-14);
    EXPECT_LT(max_abs_diff(matmul_nt(a, transpose(b)), c), 1e-14);
    EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Matrix, Norms) {
    const Matrix d = Matrix::diagonal({3, 4});
    EXPECT_DOUBLE_EQ(frobenius_norm(d), 5.0);
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix(3, 2)), 0.0);
    EXPECT_DOUBLE_EQ(inner(d, d), 25.0);
}

TEST(Matrix, Arithmetic) {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{1, 1}, {1, 1}};
    EXPECT_EQ(a + b, (Matrix{{2, 3}, {4, 5}}));
    EXPECT_EQ(a - b, (Matrix{{0, 1}, {2, 3}}));
    EXPECT_EQ(2.0 * a, (Matrix{{2, 4}, {6, 8}}));
    Matrix c = a;
    c.axpy(-1.0, a);
    EXPECT_EQ(c, Matrix(2, 2));
    EXPECT_THROW(c += Matrix(1, 2), ShapeError);
}

TEST(Matrix, IdentityAndTranspose) {
    const Matrix i3 = Matrix::identity(3);
    EXPECT_EQ(transpose(i3), i3);
    const Matrix a{{1, 2, 3}};
    EXPECT_EQ(transpose(a).rows(), 3u);
    EXPECT_EQ(transpose(transpose(a)), a);
}
