#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rse/error.hpp"
#include "rse/nn/tensor.hpp"

namespace rse::nn {

enum class LayerKind { Conv, TransposedConv, FullyConnected };

// im2col / col2im --------------------------------------------------------------
//
// Rows of the column matrix are output positions (b, oy, ox); columns are
// (ky, kx, c). Out-of-image taps read as zero. Both work on raw NHWC buffers
// so that layers can stream over the batch in cache-sized chunks.

inline void im2col(const double* x, int n, int h, int w, int c, int k, int s, int p, int ho, int wo, Matrix& cols) {
    cols.resize(static_cast<Eigen::Index>(n) * ho * wo, static_cast<Eigen::Index>(k) * k * c);
    double* dst = cols.data();
    for (int b = 0; b < n; ++b) {
        const double* xb = x + static_cast<std::size_t>(b) * h * w * c;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + static_cast<std::ptrdiff_t>(k) * c, 0.0);
                        dst += static_cast<std::ptrdiff_t>(k) * c;
                        continue;
                    }
                    const double* row = xb + static_cast<std::size_t>(iy) * w * c;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * s - p + kx;
                        if (ix < 0 || ix >= w)
                            std::fill(dst, dst + c, 0.0);
                        else
                            std::copy(row + static_cast<std::ptrdiff_t>(ix) * c, row + static_cast<std::ptrdiff_t>(ix + 1) * c, dst);
                        dst += c;
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-adds column entries into `x`, which must hold n*h*w*c values.
inline void col2im(const Matrix& cols, int n, int h, int w, int c, int k, int s, int p, int ho, int wo, double* x) {
    const double* src = cols.data();
    for (int b = 0; b < n; ++b) {
        double* xb = x + static_cast<std::size_t>(b) * h * w * c;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= h) {
                        src += static_cast<std::ptrdiff_t>(k) * c;
                        continue;
                    }
                    double* row = xb + static_cast<std::size_t>(iy) * w * c;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * s - p + kx;
                        if (ix >= 0 && ix < w) {
                            double* dst = row + static_cast<std::ptrdiff_t>(ix) * c;
                            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                        }
                        src += c;
                    }
                }
            }
        }
    }
}

inline void im2col(const Tensor4& x, int k, int s, int p, int ho, int wo, Matrix& cols) {
    im2col(x.data(), x.n, x.h, x.w, x.c, k, s, p, ho, wo, cols);
}

inline void col2im(const Matrix& cols, int k, int s, int p, int ho, int wo, Tensor4& x) {
    col2im(cols, x.n, x.h, x.w, x.c, k, s, p, ho, wo, x.data());
}

/// Samples per chunk so that a chunk spans about `target_rows` spatial positions.
inline int chunk_samples(int positions_per_sample, int target_rows = 2048) {
    return positions_per_sample >= target_rows ? 1 : target_rows / positions_per_sample;
}

// Initialisation --------------------------------------------------------------

inline void init_uniform(Matrix& m, double limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

inline void he_uniform(Matrix& m, int fan_in, std::mt19937_64& rng) {
    init_uniform(m, std::sqrt(6.0 / fan_in), rng);
}

inline void glorot_uniform(Matrix& m, int fan_in, int fan_out, std::mt19937_64& rng) {
    init_uniform(m, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

enum class Init { He, Glorot };

// Layers ----------------------------------------------------------------------
//
// Each layer caches what its backward pass needs from the most recent forward
// call. backward() accumulates into the parameter gradients and returns the
// gradient with respect to the input.

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), s_(stride), p_(pad),
          weight(static_cast<Eigen::Index>(kernel) * kernel * in_ch, out_ch), bias(1, out_ch) {}

    static constexpr LayerKind kind = LayerKind::Conv;

    int out_extent(int in) const { return (in + 2 * p_ - k_) / s_ + 1; }
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

    void init(Init how, std::mt19937_64& rng) {
        if (how == Init::He)
            he_uniform(weight.value, k_ * k_ * in_ch_, rng);
        else
            glorot_uniform(weight.value, k_ * k_ * in_ch_, k_ * k_ * out_ch_, rng);
        bias.value.setZero();
    }

    Tensor4 forward(const Tensor4& x) {
        if (x.c != in_ch_) throw ShapeError("conv expects " + std::to_string(in_ch_) + " channels, got " + x.shape_string());
        x_ = x;
        const int ho = out_extent(x.h), wo = out_extent(x.w);
        if (ho <= 0 || wo <= 0) throw ShapeError("conv input too small: " + x.shape_string());
        Tensor4 y(x.n, ho, wo, out_ch_);
        const int step = chunk_samples(ho * wo);
        const std::size_t in_stride = x.sample_size(), out_stride = y.sample_size();
        Matrix cols;
        for (int b0 = 0; b0 < x.n; b0 += step) {
            const int nb = std::min(step, x.n - b0);
            im2col(x.data() + b0 * in_stride, nb, x.h, x.w, x.c, k_, s_, p_, ho, wo, cols);
            MatrixMap ym(y.data() + b0 * out_stride, static_cast<Eigen::Index>(nb) * ho * wo, out_ch_);
            ym.noalias() = cols * weight.value;
            ym.rowwise() += bias.value.row(0);
        }
        return y;
    }

    /// With `input_grad == false` only parameter gradients are accumulated and an empty tensor is returned.
    Tensor4 backward(const Tensor4& dy, bool input_grad = true) {
        const int ho = out_extent(x_.h), wo = out_extent(x_.w);
        if (dy.n != x_.n || dy.h != ho || dy.w != wo || dy.c != out_ch_)
            throw ShapeError("conv backward got " + dy.shape_string());
        Tensor4 dx;
        if (input_grad) dx = Tensor4(x_.n, x_.h, x_.w, in_ch_);
        const int step = chunk_samples(ho * wo);
        const std::size_t in_stride = x_.sample_size(), out_stride = dy.sample_size();
        Matrix cols, dcols;
        for (int b0 = 0; b0 < x_.n; b0 += step) {
            const int nb = std::min(step, x_.n - b0);
            im2col(x_.data() + b0 * in_stride, nb, x_.h, x_.w, x_.c, k_, s_, p_, ho, wo, cols);
            ConstMatrixMap g(dy.data() + b0 * out_stride, static_cast<Eigen::Index>(nb) * ho * wo, out_ch_);
            weight.grad.noalias() += cols.transpose() * g;
            bias.grad += g.colwise().sum();
            if (input_grad) {
                dcols.noalias() = g * weight.value.transpose();
                col2im(dcols, nb, x_.h, x_.w, in_ch_, k_, s_, p_, ho, wo, dx.data() + b0 * in_stride);
            }
        }
        return dx;
    }

    std::vector<Param*> params() { return {&weight, &bias}; }

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 1, s_ = 1, p_ = 0;
    Tensor4 x_;

public:
    Param weight; // (k*k*in) x out
    Param bias;   // 1 x out
};

/// Adjoint of Conv2d(out_ch -> in_ch) with the same kernel, stride and padding.
/// `output_padding` (< stride) resolves the output size ambiguity for stride > 1.
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, int output_padding = 0)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), s_(stride), p_(pad), op_(output_padding),
          weight(static_cast<Eigen::Index>(kernel) * kernel * out_ch, in_ch), bias(1, out_ch) {
        if (output_padding < 0 || output_padding >= stride)
            throw ShapeError("output_padding must be in [0, stride)");
    }

    static constexpr LayerKind kind = LayerKind::TransposedConv;

    int out_extent(int in) const { return (in - 1) * s_ - 2 * p_ + k_ + op_; }
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

    void init(Init how, std::mt19937_64& rng) {
        if (how == Init::He)
            he_uniform(weight.value, k_ * k_ * in_ch_, rng);
        else
            glorot_uniform(weight.value, k_ * k_ * in_ch_, k_ * k_ * out_ch_, rng);
        bias.value.setZero();
    }

    Tensor4 forward(const Tensor4& x) {
        if (x.c != in_ch_)
            throw ShapeError("transposed conv expects " + std::to_string(in_ch_) + " channels, got " + x.shape_string());
        x_ = x;
        const int ho = out_extent(x.h), wo = out_extent(x.w);
        if (ho <= 0 || wo <= 0) throw ShapeError("transposed conv output would be empty");
        Tensor4 y(x.n, ho, wo, out_ch_);
        const int step = chunk_samples(x.h * x.w);
        const std::size_t in_stride = x.sample_size(), out_stride = y.sample_size();
        Matrix cols;
        for (int b0 = 0; b0 < x.n; b0 += step) {
            const int nb = std::min(step, x.n - b0);
            ConstMatrixMap xm(x.data() + b0 * in_stride, static_cast<Eigen::Index>(nb) * x.h * x.w, in_ch_);
            cols.noalias() = xm * weight.value.transpose();
            col2im(cols, nb, ho, wo, out_ch_, k_, s_, p_, x.h, x.w, y.data() + b0 * out_stride);
        }
        y.pixels().rowwise() += bias.value.row(0);
        return y;
    }

    Tensor4 backward(const Tensor4& dy) {
        if (dy.n != x_.n || dy.h != out_extent(x_.h) || dy.w != out_extent(x_.w) || dy.c != out_ch_)
            throw ShapeError("transposed conv backward got " + dy.shape_string());
        Tensor4 dx(x_.n, x_.h, x_.w, in_ch_);
        const int step = chunk_samples(x_.h * x_.w);
        const std::size_t in_stride = x_.sample_size(), out_stride = dy.sample_size();
        Matrix dcols;
        for (int b0 = 0; b0 < x_.n; b0 += step) {
            const int nb = std::min(step, x_.n - b0);
            im2col(dy.data() + b0 * out_stride, nb, dy.h, dy.w, dy.c, k_, s_, p_, x_.h, x_.w, dcols);
            ConstMatrixMap xm(x_.data() + b0 * in_stride, static_cast<Eigen::Index>(nb) * x_.h * x_.w, in_ch_);
            weight.grad.noalias() += dcols.transpose() * xm;
            MatrixMap dxm(dx.data() + b0 * in_stride, static_cast<Eigen::Index>(nb) * x_.h * x_.w, in_ch_);
            dxm.noalias() = dcols * weight.value;
        }
        bias.grad += dy.pixels().colwise().sum();
        return dx;
    }

    std::vector<Param*> params() { return {&weight, &bias}; }

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 1, s_ = 1, p_ = 0, op_ = 0;
    Tensor4 x_;

public:
    Param weight; // (k*k*out) x in
    Param bias;   // 1 x out
};

/// Fully connected layer; flattens each sample. Output shape is (n, 1, 1, out).
class Dense {
public:
    Dense() = default;
    Dense(int in, int out) : in_(in), out_(out), weight(in, out), bias(1, out) {}

    static constexpr LayerKind kind = LayerKind::FullyConnected;

    int in_features() const { return in_; }
    int out_features() const { return out_; }

    void init(Init how, std::mt19937_64& rng) {
        if (how == Init::He)
            he_uniform(weight.value, in_, rng);
        else
            glorot_uniform(weight.value, in_, out_, rng);
        bias.value.setZero();
    }

    Matrix forward(const Matrix& x) {
        if (x.cols() != in_)
            throw ShapeError("dense expects " + std::to_string(in_) + " features, got " + std::to_string(x.cols()));
        x_ = x;
        Matrix y = x * weight.value;
        y.rowwise() += bias.value.row(0);
        return y;
    }

    /// Accumulates parameter gradients and returns dL/dx.
    Matrix backward(const Matrix& dy) {
        if (dy.rows() != x_.rows() || dy.cols() != out_) throw ShapeError("dense backward shape mismatch");
        weight.grad.noalias() += x_.transpose() * dy;
        bias.grad += dy.colwise().sum();
        return dy * weight.value.transpose();
    }

    /// dL/dx only; parameter gradients untouched.
    Matrix backward_input(const Matrix& dy) const { return dy * weight.value.transpose(); }

    Tensor4 forward(const Tensor4& x) { return Tensor4::from_matrix(forward(Matrix(x.rows()))); }

    std::vector<Param*> params() { return {&weight, &bias}; }

private:
    int in_ = 0, out_ = 0;
    Matrix x_;

public:
    Param weight; // in x out
    Param bias;   // 1 x out
};

/// Elementwise max(0, x). The subgradient at 0 is taken as 0.
class Relu {
public:
    // NaN passes through so that bad inputs surface in the loss.
    Matrix forward(const Matrix& x) {
        y_ = x.unaryExpr([](double v) { return v < 0.0 ? 0.0 : v; });
        return y_;
    }
    Tensor4 forward(const Tensor4& x) {
        Tensor4 y = x;
        for (double& v : y.v) v = v < 0.0 ? 0.0 : v;
        y_ = Matrix(y.pixels());
        return y;
    }
    Matrix backward(const Matrix& dy) const {
        if (dy.rows() != y_.rows() || dy.cols() != y_.cols()) throw ShapeError("relu backward shape mismatch");
        return (y_.array() > 0.0).select(dy, 0.0);
    }
    Tensor4 backward(const Tensor4& dy) const {
        Tensor4 dx = dy;
        if (static_cast<Eigen::Index>(dx.size()) != y_.size()) throw ShapeError("relu backward shape mismatch");
        const double* y = y_.data();
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (!(y[i] > 0.0)) dx.v[i] = 0.0;
        return dx;
    }

private:
    Matrix y_;
};

/// Nearest-neighbour 2x upsampling in height and width.
inline Tensor4 upsample2x(const Tensor4& x) {
    Tensor4 y(x.n, 2 * x.h, 2 * x.w, x.c);
    for (int b = 0; b < x.n; ++b)
        for (int i = 0; i < y.h; ++i)
            for (int j = 0; j < y.w; ++j) {
                const double* src = &x.v[((static_cast<std::size_t>(b) * x.h + i / 2) * x.w + j / 2) * x.c];
                double* dst = &y.v[((static_cast<std::size_t>(b) * y.h + i) * y.w + j) * y.c];
                for (int ch = 0; ch < x.c; ++ch) dst[ch] = src[ch];
            }
    return y;
}

/// Gradient of upsample2x: sums each 2x2 block.
inline Tensor4 upsample2x_backward(const Tensor4& dy) {
    if (dy.h % 2 != 0 || dy.w % 2 != 0) throw ShapeError("upsample backward expects even extents");
    Tensor4 dx(dy.n, dy.h / 2, dy.w / 2, dy.c);
    for (int b = 0; b < dy.n; ++b)
        for (int i = 0; i < dy.h; ++i)
            for (int j = 0; j < dy.w; ++j) {
                const double* src = &dy.v[((static_cast<std::size_t>(b) * dy.h + i) * dy.w + j) * dy.c];
                double* dst = &dx.v[((static_cast<std::size_t>(b) * dx.h + i / 2) * dx.w + j / 2) * dx.c];
                for (int ch = 0; ch < dy.c; ++ch) dst[ch] += src[ch];
            }
    return dx;
}

} // namespace rse::nn
