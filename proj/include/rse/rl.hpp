#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rse/error.hpp"
#include "rse/metrics.hpp"
#include "rse/model.hpp"
#include "rse/nn/adam.hpp"
#include "rse/nn/layers.hpp"
#include "rse/rng.hpp"
#include "rse/train.hpp"

namespace rse::rl {

struct SacConfig {
    double alpha = 0.2;
    double gamma = 0.99;
    double k = 1.25;
    double c = 5.0;
    double psnr_target = 30.0;
    int episode_length = 8;
    int replay_capacity = 1000;
    double polyak = 0.995;
    int hidden = 64;
    int batch = 64;
    double lr = 3e-4;
    int epochs = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(alpha > 0)) throw InvalidArgument("alpha must be positive");
        if (!(gamma >= 0 && gamma < 1)) throw InvalidArgument("gamma must lie in [0, 1)");
        if (episode_length <= 0 || replay_capacity <= 0 || hidden <= 0 || batch <= 0 || epochs < 0)
            throw InvalidArgument("episode length, replay capacity, widths and batch must be positive");
        if (!(polyak >= 0 && polyak <= 1)) throw InvalidArgument("polyak factor must lie in [0, 1]");
        if (!(lr > 0)) throw InvalidArgument("learning rate must be positive");
    }
};

inline void to_json(nlohmann::json& j, const SacConfig& c) {
    j = {{"alpha", c.alpha},
         {"gamma", c.gamma},
         {"k", c.k},
         {"c", c.c},
         {"psnr_target", c.psnr_target},
         {"episode_length", c.episode_length},
         {"replay_capacity", c.replay_capacity},
         {"polyak", c.polyak},
         {"hidden", c.hidden},
         {"batch", c.batch},
         {"lr", c.lr},
         {"epochs", c.epochs},
         {"seed", c.seed}};
}

// Actions ----------------------------------------------------------------------

inline constexpr double kActionLow = 0.999;
inline constexpr double kActionHigh = 1.001;
/// Squashed outputs stay this far inside the open interval.
inline constexpr double kSquashMargin = 1.0 - 1e-6;

/// Maps a normalised action y in [-1, 1] to a scale factor strictly inside (0.999, 1.001).
inline double scale_from_normalized(double y) { return 1.0 + 1e-3 * kSquashMargin * y; }

inline Eigen::VectorXd scales_from_normalized(const Eigen::VectorXd& y) {
    return y.unaryExpr([](double v) { return scale_from_normalized(v); });
}

inline Eigen::VectorXd identity_action(int latent) { return Eigen::VectorXd::Ones(kSubspaces * latent); }

/// Accepts the closed interval; policy outputs stay strictly inside it.
inline void validate_action(const Eigen::VectorXd& a, int latent) {
    if (a.size() != kSubspaces * latent)
        throw ShapeError("action must have " + std::to_string(kSubspaces * latent) + " components");
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (!(a(i) >= kActionLow && a(i) <= kActionHigh))
            throw InvalidArgument("action component " + std::to_string(i) + " outside [0.999, 1.001]");
}

/// Scales every weight matrix of T_s column-wise by a_s (the s-th block of the action).
/// Biases are left alone.
inline void apply_action(std::array<TransformMLP, kSubspaces>& transforms, const Eigen::VectorXd& a) {
    const int d = transforms[0].dim();
    validate_action(a, d);
    for (int s = 0; s < kSubspaces; ++s) {
        const auto as = a.segment(s * d, d);
        for (auto& layer : transforms[s].layers()) {
            Matrix& w = layer.weight.value;
            if (w.cols() != d) throw ShapeError("transform layer width does not match the action");
            for (Eigen::Index j = 0; j < w.cols(); ++j) w.col(j) *= as(j);
        }
    }
}

inline double reward(double psnr, const SacConfig& cfg) {
    if (!std::isfinite(psnr)) throw NonFiniteError("reward needs a finite PSNR");
    return cfg.k * (psnr - cfg.psnr_target) + cfg.c;
}

/// r + gamma (1 - done) (min_j Q_j(s', a') - alpha log pi(a'|s'))
inline double q_target(double r, double done, double gamma, double alpha, double min_q_next, double logp_next) {
    return r + gamma * (1.0 - done) * (min_q_next - alpha * logp_next);
}

// Networks ---------------------------------------------------------------------

/// in -> hidden -> hidden -> out with ReLU between layers and a linear head.
class Mlp {
public:
    Mlp() = default;
    Mlp(int in, int hidden, int out, std::mt19937_64& rng)
        : fc_{nn::Dense(in, hidden), nn::Dense(hidden, hidden), nn::Dense(hidden, out)} {
        fc_[0].init(nn::Init::He, rng);
        fc_[1].init(nn::Init::He, rng);
        fc_[2].init(nn::Init::Glorot, rng);
    }

    Matrix forward(const Matrix& x) {
        Matrix h = act_[0].forward(fc_[0].forward(x));
        h = act_[1].forward(fc_[1].forward(h));
        return fc_[2].forward(h);
    }

    Matrix backward(const Matrix& dy) {
        Matrix g = act_[1].backward(fc_[2].backward(dy));
        g = act_[0].backward(fc_[1].backward(g));
        return fc_[0].backward(g);
    }

    /// dL/dx through the last forward pass, without touching parameter gradients.
    Matrix backward_input(const Matrix& dy) const {
        Matrix g = act_[1].backward(fc_[2].backward_input(dy));
        g = act_[0].backward(fc_[1].backward_input(g));
        return fc_[0].backward_input(g);
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (auto& f : fc_)
            for (auto* p : f.params()) out.push_back(p);
        return out;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    /// this <- rho * this + (1 - rho) * src
    void polyak_from(Mlp& src, double rho) {
        auto dst = params();
        auto from = src.params();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = rho * dst[i]->value + (1.0 - rho) * from[i]->value;
    }

private:
    std::array<nn::Dense, 3> fc_;
    std::array<nn::Relu, 2> act_;
};

struct Transition {
    double obs = 0;
    Eigen::VectorXd action;  // normalised, in [-1, 1]
    double reward = 0;
    double next_obs = 0;
    double done = 0;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw InvalidArgument("replay capacity must be positive");
    }

    void push(Transition t) {
        if (data_.size() < capacity_)
            data_.push_back(std::move(t));
        else
            data_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }

    std::size_t size() const { return data_.size(); }
    const Transition& operator[](std::size_t i) const { return data_.at(i); }

    std::vector<std::size_t> sample(std::size_t n, std::mt19937_64& rng) const {
        if (data_.empty()) throw InvalidArgument("cannot sample an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
        std::vector<std::size_t> idx(n);
        for (auto& i : idx) i = pick(rng);
        return idx;
    }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

/// Reparameterised sample from the tanh-squashed Gaussian policy.
struct PolicySample {
    Matrix mean, log_std, std, eps, u, y;  // n x A
    Eigen::VectorXd logp;                  // n
    Matrix clamp_mask;                     // 1 where log_std was not clamped
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// log(1 - tanh(u)^2), computed without cancellation.
inline double log1m_tanh2(double u) {
    const double x = -2.0 * u;
    const double softplus = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return 2.0 * (std::numbers::ln2 - u - softplus);
}

class SacAgent {
public:
    SacAgent(int action_dim, SacConfig cfg) : dim_(action_dim), cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 init(derive_seed(cfg_.seed, Stream::AgentInit));
        policy_ = Mlp(1, cfg_.hidden, 2 * dim_, init);
        q_[0] = Mlp(1 + dim_, cfg_.hidden, 1, init);
        q_[1] = Mlp(1 + dim_, cfg_.hidden, 1, init);
        q_target_ = q_;
        nn::AdamConfig ac;
        ac.base_lr = cfg_.lr;
        ac.decay = 1.0;
        opt_pi_ = nn::Adam(ac);
        opt_q_ = nn::Adam(ac);
        sample_rng_.seed(derive_seed(cfg_.seed, Stream::Policy));
        replay_rng_.seed(derive_seed(cfg_.seed, Stream::Replay));
    }

    int action_dim() const { return dim_; }
    const SacConfig& config() const { return cfg_; }
    Mlp& policy() { return policy_; }
    Mlp& q(int j) { return q_.at(j); }
    Mlp& q_target_net(int j) { return q_target_.at(j); }

    double normalize_obs(double psnr) const { return (psnr - cfg_.psnr_target) / 10.0; }

    PolicySample sample_policy(const Matrix& obs, const Matrix& eps) {
        const Matrix out = policy_.forward(obs);
        PolicySample ps;
        ps.mean = out.leftCols(dim_);
        const Matrix raw = out.rightCols(dim_);
        ps.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
        ps.clamp_mask = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>();
        ps.std = ps.log_std.array().exp();
        ps.eps = eps;
        ps.u = ps.mean + ps.std.cwiseProduct(eps);
        ps.y = ps.u.array().tanh();
        const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
        ps.logp.resize(obs.rows());
        for (Eigen::Index b = 0; b < obs.rows(); ++b) {
            double lp = 0.0;
            for (Eigen::Index i = 0; i < dim_; ++i)
                lp += -0.5 * eps(b, i) * eps(b, i) - ps.log_std(b, i) - half_log_2pi - log1m_tanh2(ps.u(b, i));
            ps.logp(b) = lp;
        }
        return ps;
    }

    Matrix draw_eps(Eigen::Index rows) { return standard_normal(rows, dim_, sample_rng_); }

    /// Stochastic normalised action for one observation.
    Eigen::VectorXd act(double psnr) {
        Matrix obs(1, 1);
        obs(0, 0) = normalize_obs(psnr);
        return sample_policy(obs, draw_eps(1)).y.row(0).transpose();
    }

    static Matrix q_input(const Matrix& obs, const Matrix& y) {
        Matrix in(obs.rows(), 1 + y.cols());
        in.col(0) = obs.col(0);
        in.rightCols(y.cols()) = y;
        return in;
    }

    /// mean_b [alpha log pi(y_b|s_b) - min_j Q_j(s_b, y_b)] for fixed eps.
    /// With `backward`, accumulates policy gradients; Q parameters are not touched.
    double policy_loss(const Matrix& obs, const Matrix& eps, bool backward) {
        const PolicySample ps = sample_policy(obs, eps);
        const Matrix in = q_input(obs, ps.y);
        const Matrix q1 = q_[0].forward(in);
        const Matrix q2 = q_[1].forward(in);
        const Eigen::Index n = obs.rows();
        const double inv_n = 1.0 / static_cast<double>(n);
        double loss = 0.0;
        Matrix d1 = Matrix::Zero(n, 1), d2 = Matrix::Zero(n, 1);
        for (Eigen::Index b = 0; b < n; ++b) {
            const bool first = q1(b, 0) <= q2(b, 0);
            loss += cfg_.alpha * ps.logp(b) - (first ? q1(b, 0) : q2(b, 0));
            (first ? d1 : d2)(b, 0) = -inv_n;
        }
        loss *= inv_n;
        if (!std::isfinite(loss)) throw NonFiniteError("non-finite policy loss");
        if (!backward) return loss;

        const Matrix dy = (q_[0].backward_input(d1) + q_[1].backward_input(d2)).rightCols(dim_);
        const double a_n = cfg_.alpha * inv_n;
        Matrix du = dy.array() * (1.0 - ps.y.array().square()) + a_n * 2.0 * ps.y.array();
        Matrix dout(n, 2 * dim_);
        dout.leftCols(dim_) = du;
        dout.rightCols(dim_) =
            ((du.array() * ps.std.array() * ps.eps.array() - a_n) * ps.clamp_mask.array()).matrix();
        policy_.backward(dout);
        return loss;
    }

    /// Bellman targets for a batch, using the target critics and a fresh policy sample at s'.
    Eigen::VectorXd bellman_targets(const std::vector<const Transition*>& batch, const Matrix& next_eps) {
        const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
        Matrix next_obs(n, 1);
        for (Eigen::Index b = 0; b < n; ++b) next_obs(b, 0) = normalize_obs(batch[b]->next_obs);
        const PolicySample ps = sample_policy(next_obs, next_eps);
        const Matrix in = q_input(next_obs, ps.y);
        const Matrix t1 = q_target_[0].forward(in);
        const Matrix t2 = q_target_[1].forward(in);
        Eigen::VectorXd f(n);
        for (Eigen::Index b = 0; b < n; ++b)
            f(b) = q_target(batch[b]->reward, batch[b]->done, cfg_.gamma, cfg_.alpha, std::min(t1(b, 0), t2(b, 0)),
                            ps.logp(b));
        return f;
    }

    /// sum_j 0.5 mean_b (Q_j(s_b, y_b) - f_b)^2; with `backward`, accumulates critic gradients.
    double q_loss(const std::vector<const Transition*>& batch, const Eigen::VectorXd& targets, bool backward) {
        const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
        Matrix obs(n, 1), y(n, dim_);
        for (Eigen::Index b = 0; b < n; ++b) {
            obs(b, 0) = normalize_obs(batch[b]->obs);
            y.row(b) = batch[b]->action.transpose();
        }
        const Matrix in = q_input(obs, y);
        double loss = 0.0;
        for (auto& q : q_) {
            const Matrix pred = q.forward(in);
            const Matrix diff = pred - Matrix(targets);
            loss += 0.5 * diff.squaredNorm() / static_cast<double>(n);
            if (backward) q.backward(diff / static_cast<double>(n));
        }
        if (!std::isfinite(loss)) throw NonFiniteError("non-finite critic loss");
        return loss;
    }

    struct UpdateStats {
        double q_loss = 0, policy_loss = 0;
    };

    /// One critic step, one policy step, then polyak averaging of the target critics.
    UpdateStats update(const ReplayBuffer& buffer) {
        if (buffer.size() < static_cast<std::size_t>(cfg_.batch)) throw InvalidArgument("replay buffer smaller than batch");
        std::vector<const Transition*> batch;
        for (auto i : buffer.sample(static_cast<std::size_t>(cfg_.batch), replay_rng_)) batch.push_back(&buffer[i]);
        const Eigen::Index n = static_cast<Eigen::Index>(batch.size());

        UpdateStats st;
        const Eigen::VectorXd f = bellman_targets(batch, draw_eps(n));
        for (auto& q : q_) q.zero_grad();
        st.q_loss = q_loss(batch, f, true);
        std::vector<Param*> qp = q_[0].params();
        for (auto* p : q_[1].params()) qp.push_back(p);
        opt_q_.step(qp);

        Matrix obs(n, 1);
        for (Eigen::Index b = 0; b < n; ++b) obs(b, 0) = normalize_obs(batch[b]->obs);
        policy_.zero_grad();
        st.policy_loss = policy_loss(obs, draw_eps(n), true);
        opt_pi_.step(policy_.params());

        for (int j = 0; j < 2; ++j) q_target_[j].polyak_from(q_[j], cfg_.polyak);
        return st;
    }

private:
    int dim_;
    SacConfig cfg_;
    Mlp policy_;
    std::array<Mlp, 2> q_, q_target_;
    nn::Adam opt_pi_, opt_q_;
    std::mt19937_64 sample_rng_, replay_rng_;
};

// Environment ------------------------------------------------------------------

struct StepResult {
    double obs = 0;  // mean PSNR after the action
    double reward = 0;
    bool done = false;
};

/// Wraps a pretrained model and a fixed evaluation set. The observation is the
/// mean PSNR of the denoised evaluation images; actions rescale the transform
/// weights cumulatively until the next reset.
class Environment {
public:
    Environment(Vae model, const std::vector<ImagePair>& eval, int overlap, SacConfig cfg)
        : model_(std::move(model)), cfg_(cfg) {
        if (eval.empty()) throw InvalidArgument("environment needs at least one evaluation image");
        for (const auto& p : eval) {
            Item it;
            it.layout = decompose(rgb_to_yuv(p.noisy), model_.patch(), overlap);
            it.mu = model_.encode(as_batch(it.layout)).mu;
            it.clean = p.clean;
            items_.push_back(std::move(it));
        }
        pretrained_ = model_.transforms();
        initial_psnr_ = mean_psnr();
        obs_ = initial_psnr_;
    }

    double initial_psnr() const { return initial_psnr_; }
    double observation() const { return obs_; }
    int steps_taken() const { return t_; }
    Vae& model() { return model_; }
    const std::array<TransformMLP, kSubspaces>& transforms() const { return model_.transforms(); }

    double reset() {
        model_.transforms() = pretrained_;
        t_ = 0;
        obs_ = initial_psnr_;
        return obs_;
    }

    StepResult step(const Eigen::VectorXd& scales) {
        apply_action(model_.transforms(), scales);
        obs_ = mean_psnr();
        ++t_;
        return {obs_, reward(obs_, cfg_), t_ >= cfg_.episode_length};
    }

    /// Mean PSNR of the evaluation set under the current transforms; images are
    /// decoded one at a time so results match denoise_image bit for bit.
    double mean_psnr() {
        double sum = 0.0;
        for (auto& it : items_) {
            const double p = psnr(reassemble_rgb(it.layout, model_.decode_transformed(it.mu)), it.clean);
            if (!std::isfinite(p)) throw NonFiniteError("evaluation image reproduced exactly; PSNR is infinite");
            sum += p;
        }
        return sum / static_cast<double>(items_.size());
    }

private:
    struct Item {
        PatchSet layout;
        std::array<Matrix, kSubspaces> mu;
        ImageBuffer clean;
    };
    Vae model_;
    SacConfig cfg_;
    std::vector<Item> items_;
    std::array<TransformMLP, kSubspaces> pretrained_;
    double initial_psnr_ = 0, obs_ = 0;
    int t_ = 0;
};

// Driver -----------------------------------------------------------------------

struct TrajectoryRow {
    int epoch = 0;
    int step = 0;
    double mean_psnr = 0;
    double reward = 0;
    double action_min = 1;
    double action_max = 1;
};

struct EnhanceResult {
    Vae best_model;
    double initial_psnr = 0;
    double best_psnr = 0;
    int best_epoch = 0;
    int best_step = 0;
    std::vector<TrajectoryRow> trajectory;

    nlohmann::json meta(const SacConfig& cfg) const {
        return {{"initial_psnr", initial_psnr}, {"best_psnr", best_psnr}, {"best_epoch", best_epoch},
                {"best_step", best_step},       {"sac", cfg}};
    }
};

/// Runs `cfg.epochs` episodes of SAC from the pretrained model. Row (0, 0) of the
/// trajectory is the untouched model; the returned model is the best state seen.
inline EnhanceResult run_self_enhancement(const Vae& pretrained, const std::vector<ImagePair>& eval, int overlap,
                                          const SacConfig& cfg,
                                          const std::function<void(const TrajectoryRow&)>& on_step = {}) {
    cfg.validate();
    Environment env(pretrained, eval, overlap, cfg);
    SacAgent agent(kSubspaces * pretrained.latent(), cfg);
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));

    EnhanceResult res;
    res.best_model = pretrained;
    res.initial_psnr = res.best_psnr = env.initial_psnr();
    res.trajectory.push_back({0, 0, env.initial_psnr(), reward(env.initial_psnr(), cfg), 1.0, 1.0});
    if (on_step) on_step(res.trajectory.back());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double obs = env.reset();
        for (int step = 1; step <= cfg.episode_length; ++step) {
            const Eigen::VectorXd y = agent.act(obs);
            const Eigen::VectorXd scales = scales_from_normalized(y);
            const StepResult sr = env.step(scales);
            buffer.push({obs, y, sr.reward, sr.obs, sr.done ? 1.0 : 0.0});

            TrajectoryRow row{epoch, step, sr.obs, sr.reward, scales.minCoeff(), scales.maxCoeff()};
            res.trajectory.push_back(row);
            if (on_step) on_step(row);
            if (sr.obs > res.best_psnr) {
                res.best_psnr = sr.obs;
                res.best_epoch = epoch;
                res.best_step = step;
                res.best_model.transforms() = env.transforms();
            }
            if (buffer.size() >= static_cast<std::size_t>(cfg.batch)) agent.update(buffer);
            obs = sr.obs;
            if (sr.done) break;
        }
    }
    return res;
}

/// Columns: epoch, step, mean_psnr, reward, action_min, action_max.
inline void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "epoch,step,mean_psnr,reward,action_min,action_max\n";
    for (const auto& r : rows)
        os << r.epoch << ',' << r.step << ',' << format_metric(r.mean_psnr) << ',' << format_metric(r.reward) << ','
           << format_metric(r.action_min) << ',' << format_metric(r.action_max) << '\n';
}

} // namespace rse::rl
