// Dense row-major matrix of doubles plus the few BLAS-1/2 kernels the policy
// needs. Desk-scale sizes; reproducibility matters more than peak speed, so
// every reduction has a fixed association order.
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "gzrl/common.hpp"

namespace gzrl {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Four-accumulator dot product: fixed summation order, some ILP for free.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    return dot(a.data(), b.data(), a.size());
}

// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out = v * M (row vector times matrix; v has M.rows() entries).
inline void vec_mat(const std::vector<double>& v, const Matrix& m, std::vector<double>& out) {
    if (v.size() != m.rows()) throw ShapeError("vec_mat: length mismatch");
    out.assign(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) axpy(v[r], m.row(r), out.data(), m.cols());
}

// out[r] = dot(M.row(r), v) (v has M.cols() entries).
inline void mat_vec(const Matrix& m, const std::vector<double>& v, std::vector<double>& out) {
    if (v.size() != m.cols()) throw ShapeError("mat_vec: length mismatch");
    out.resize(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v.data(), m.cols());
}

// M += outer(u, v).
inline void add_outer(Matrix& m, const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != m.rows() || v.size() != m.cols())
        throw ShapeError("add_outer: shape mismatch");
    for (std::size_t r = 0; r < m.rows(); ++r) axpy(u[r], v.data(), m.row(r), m.cols());
}

} // namespace gzrl
