#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "specclip/rng.hpp"

namespace specclip {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Construction from user data rejects
/// non-finite entries; arithmetic results are not re-checked.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols) : rows_{rows}, cols_{cols}, data_(rows * cols, 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_{rows}, cols_{cols}, data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: expected " + std::to_string(rows_ * cols_) + " entries, got " +
                             std::to_string(data_.size()));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) throw std::invalid_argument("Matrix: non-finite entry");
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
            for (double v : r) {
                if (!std::isfinite(v)) throw std::invalid_argument("Matrix: non-finite entry");
                data_.push_back(v);
            }
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }
    static Matrix diagonal(std::initializer_list<double> d) {
        return diagonal(std::span<const double>(d.begin(), d.size()));
    }

    static Matrix column(std::span<const double> v) { return Matrix(v.size(), 1, {v.begin(), v.end()}); }

    /// i.i.d. N(0, stddev^2) entries. Uses the polar method in bulk, so the
    /// values differ from repeated rng.normal() calls on the same stream.
    static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
        Matrix m(rows, cols);
        const std::size_t n = m.data_.size();
        const std::size_t pairs = (n + 1) / 2;
        std::vector<double> xy(2 * pairs);
        Eigen::ArrayXd s(static_cast<Eigen::Index>(pairs));
        for (std::size_t p = 0; p < pairs; ++p) {
            double x = 0.0, y = 0.0, r2 = 0.0;
            // 32-bit coordinates: one Philox word each; ample resolution for normals.
            do {
                x = static_cast<double>(static_cast<std::int32_t>(rng.next_u32())) * 0x1.0p-31;
                y = static_cast<double>(static_cast<std::int32_t>(rng.next_u32())) * 0x1.0p-31;
                r2 = x * x + y * y;
            } while (r2 >= 1.0 || r2 == 0.0);
            xy[2 * p] = x;
            xy[2 * p + 1] = y;
            s[static_cast<Eigen::Index>(p)] = r2;
        }
        s = stddev * (-2.0 * s.log() / s).sqrt();
        for (std::size_t i = 0; i < n; ++i) m.data_[i] = xy[i] * s[static_cast<Eigen::Index>(i / 2)];
        return m;
    }

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t min_dim() const { return std::min(rows_, cols_); }
    [[nodiscard]] bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }

    [[nodiscard]] std::vector<double> column_copy(std::size_t j) const {
        std::vector<double> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Matrix& operator+=(const Matrix& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    /// this += alpha * o
    Matrix& axpy(double alpha, const Matrix& o) {
        require_same(o, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * o.data_[i];
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    void require_same(const Matrix& o, const char* what) const {
        if (!same_shape(o)) {
            throw ShapeError(std::string("Matrix ") + what + ": shape " + shape_string() + " vs " +
                             o.shape_string());
        }
    }

    [[nodiscard]] std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<RowMajor> view(Matrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace detail

// Products go through Eigen's GEMM (single-threaded, deterministic for a
// given build).

/// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
    Matrix c(a.rows(), b.cols());
    if (a.cols() > 0) detail::view(c).noalias() = detail::view(a) * detail::view(b);
    return c;
}

/// A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
    Matrix c(a.cols(), b.cols());
    if (a.rows() > 0) detail::view(c).noalias() = detail::view(a).transpose() * detail::view(b);
    return c;
}

/// A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    Matrix c(a.rows(), b.rows());
    if (a.cols() > 0) detail::view(c).noalias() = detail::view(a) * detail::view(b).transpose();
    return c;
}

/// Frobenius inner product <A, B>.
inline double inner(const Matrix& a, const Matrix& b) {
    a.require_same(b, "inner");
    double s = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    return s;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    a.require_same(b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    using Vec = Eigen::Map<const Eigen::VectorXd>;
    const auto n = static_cast<Eigen::Index>(a.size());
    return Vec(a.data(), n).dot(Vec(b.data(), n));
}

}  // namespace specclip
