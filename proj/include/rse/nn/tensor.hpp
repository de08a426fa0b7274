#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rse/error.hpp"

namespace rse::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Dense NHWC tensor of doubles.
struct Tensor4 {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int h_, int w_, int c_, double fill = 0.0) : n(n_), h(h_), w(w_), c(c_) {
        if (n_ <= 0 || h_ <= 0 || w_ <= 0 || c_ <= 0) throw ShapeError("tensor dimensions must be positive");
        v.assign(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill);
    }

    std::size_t size() const { return v.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(h) * w * c; }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& at(int b, int y, int x, int ch) { return v[((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch]; }
    double at(int b, int y, int x, int ch) const {
        return v[((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch];
    }

    /// (n*h*w) x c view: one row per spatial position.
    MatrixMap pixels() { return {v.data(), static_cast<Eigen::Index>(n) * h * w, c}; }
    ConstMatrixMap pixels() const { return {v.data(), static_cast<Eigen::Index>(n) * h * w, c}; }

    /// n x (h*w*c) view: one row per sample.
    MatrixMap rows() { return {v.data(), n, static_cast<Eigen::Index>(sample_size())}; }
    ConstMatrixMap rows() const { return {v.data(), n, static_cast<Eigen::Index>(sample_size())}; }

    bool same_shape(const Tensor4& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }

    std::string shape_string() const {
        return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(c) +
               ")";
    }

    static Tensor4 from_matrix(const Matrix& m) {
        Tensor4 t(static_cast<int>(m.rows()), 1, 1, static_cast<int>(m.cols()));
        t.rows() = m;
        return t;
    }

    Tensor4 reshaped(int n_, int h_, int w_, int c_) const {
        if (static_cast<std::size_t>(n_) * h_ * w_ * c_ != v.size())
            throw ShapeError("reshape " + shape_string() + " changes element count");
        Tensor4 t;
        t.n = n_;
        t.h = h_;
        t.w = w_;
        t.c = c_;
        t.v = v;
        return t;
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

/// A trainable parameter block with its accumulated gradient.
struct Param {
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(Eigen::Index rows, Eigen::Index cols) : value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

} // namespace rse::nn
