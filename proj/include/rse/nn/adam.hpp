#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rse/error.hpp"
#include "rse/nn/tensor.hpp"

namespace rse::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double base_lr = 1e-3;
    double decay = 0.95;        // multiplicative factor per decay_steps
    double decay_steps = 1000;  // continuous (non-staircase) exponent
};

/// base_lr * decay^(t / decay_steps)
inline double lr_at(std::int64_t t, const AdamConfig& cfg = {}) {
    if (t < 0) throw InvalidArgument("step must be non-negative");
    return cfg.base_lr * std::pow(cfg.decay, static_cast<double>(t) / cfg.decay_steps);
}

/// Adam with bias correction and an exponentially decaying learning rate.
/// Moment buffers are created lazily to match the registered parameters.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }

    std::vector<Matrix>& first_moments() { return m_; }
    std::vector<Matrix>& second_moments() { return v_; }
    const std::vector<Matrix>& first_moments() const { return m_; }
    const std::vector<Matrix>& second_moments() const { return v_; }

    /// Applies one update to every parameter using its accumulated gradient.
    /// Throws NonFiniteError before touching anything if a gradient is not finite.
    void step(const std::vector<Param*>& params) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            }
        }
        if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i]->grad.rows() != m_[i].rows() || params[i]->grad.cols() != m_[i].cols())
                throw ShapeError("Adam: gradient shape does not match moment buffer");
            if (!params[i]->grad.allFinite())
                throw NonFiniteError("non-finite gradient in parameter block " + std::to_string(i));
        }

        const double lr = lr_at(t_, cfg_);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_ + 1));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_ + 1));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& g = params[i]->grad;
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
            params[i]->value.array() -=
                lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
        }
        ++t_;
    }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

inline void zero_grads(const std::vector<Param*>& params) {
    for (auto* p : params) p->zero_grad();
}

} // namespace rse::nn
