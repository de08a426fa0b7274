#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rse/color.hpp"
#include "rse/error.hpp"
#include "rse/image.hpp"
#include "rse/metrics.hpp"
#include "rse/model.hpp"
#include "rse/nn/adam.hpp"
#include "rse/patch.hpp"
#include "rse/rng.hpp"

namespace rse {

struct TrainConfig {
    int patch = 16;
    int overlap = 4;
    int latent = 72;
    int batch = 128;
    int epochs = 50;
    double base_lr = 1e-3;
    double lr_decay = 0.95;
    double decay_steps = 1000;
    double lambda_reg = 1e-5;
    std::uint64_t seed = 0;
    double sigma = 0.147;

    void validate() const {
        if (patch <= 0 || patch % 4 != 0) throw InvalidArgument("patch size must be a positive multiple of 4");
        if (overlap < 0 || patch - overlap < 1) throw InvalidArgument("overlap must satisfy 0 <= overlap < patch");
        if (latent <= 0 || batch <= 0 || epochs < 0) throw InvalidArgument("latent, batch must be positive");
        if (!(base_lr > 0) || !(lr_decay > 0) || !(decay_steps > 0)) throw InvalidArgument("bad learning-rate schedule");
        if (!(lambda_reg >= 0) || !(sigma >= 0)) throw InvalidArgument("lambda_reg and sigma must be non-negative");
    }

    ModelConfig model_config() const { return {patch, latent, derive_seed(seed, Stream::ModelInit)}; }

    nn::AdamConfig adam_config() const {
        nn::AdamConfig a;
        a.base_lr = base_lr;
        a.decay = lr_decay;
        a.decay_steps = decay_steps;
        return a;
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"patch", c.patch},       {"overlap", c.overlap},         {"latent", c.latent},
         {"batch", c.batch},       {"epochs", c.epochs},           {"base_lr", c.base_lr},
         {"lr_decay", c.lr_decay}, {"decay_steps", c.decay_steps}, {"lambda_reg", c.lambda_reg},
         {"seed", c.seed},         {"sigma", c.sigma}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.patch = j.at("patch");
    c.overlap = j.at("overlap");
    c.latent = j.at("latent");
    c.batch = j.at("batch");
    c.epochs = j.at("epochs");
    c.base_lr = j.at("base_lr");
    c.lr_decay = j.at("lr_decay");
    c.decay_steps = j.at("decay_steps");
    c.lambda_reg = j.at("lambda_reg");
    c.seed = j.at("seed");
    c.sigma = j.at("sigma");
}

/// Raised when a loss term turns non-finite; training stops at that step.
class TrainingError : public NonFiniteError {
public:
    TrainingError(std::int64_t step, std::string term)
        : NonFiniteError("non-finite loss term '" + term + "' at step " + std::to_string(step)), step_(step),
          term_(std::move(term)) {}
    std::int64_t step() const { return step_; }
    const std::string& term() const { return term_; }

private:
    std::int64_t step_;
    std::string term_;
};

/// Aligned noisy/clean YUV patches of a whole dataset, in image order then grid order.
struct PatchPairs {
    int patch = 0;
    std::size_t count = 0;
    std::vector<double> noisy, clean;

    std::size_t stride() const { return static_cast<std::size_t>(patch) * patch * 3; }

    Tensor4 gather(const std::vector<double>& src, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t n) const {
        Tensor4 t(static_cast<int>(n), patch, patch, 3);
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[begin + i] * stride()), stride(),
                        t.v.begin() + static_cast<std::ptrdiff_t>(i * stride()));
        return t;
    }
};

inline PatchPairs extract_patch_pairs(const std::vector<ImagePair>& pairs, int patch, int overlap) {
    PatchPairs out;
    out.patch = patch;
    for (const auto& p : pairs) {
        if (!p.noisy.same_shape(p.clean)) throw ShapeError("noisy and clean images differ in size for " + p.id);
        const PatchSet pn = decompose(rgb_to_yuv(p.noisy), patch, overlap);
        const PatchSet pc = decompose(rgb_to_yuv(p.clean), patch, overlap);
        out.noisy.insert(out.noisy.end(), pn.data.begin(), pn.data.end());
        out.clean.insert(out.clean.end(), pc.data.begin(), pc.data.end());
        out.count += pn.count();
    }
    return out;
}

struct EpochStats {
    int epoch = 0; // 1-based
    std::int64_t steps = 0;
    LossTerms mean;
};

struct TrainResult {
    Vae model;
    nn::Adam optimizer;
    std::vector<EpochStats> history;
    std::string rng_state;
};

/// Called after each epoch with the current model and optimizer (for checkpointing and logging).
using EpochCallback = std::function<void(const EpochStats&, Vae&, const nn::Adam&)>;

inline std::int64_t steps_per_epoch(std::size_t patches, int batch) {
    return static_cast<std::int64_t>((patches + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

/// Trains the VAE and the three latent transforms jointly with Adam.
///
/// Each epoch visits every patch pair once in a seeded permutation. A step
/// minimises the VAE objective over all parameters plus the three per-subspace
/// transformation losses.
inline TrainResult train_vae(const std::vector<ImagePair>& pairs, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (pairs.empty()) throw InvalidArgument("training set is empty");
    const PatchPairs data = extract_patch_pairs(pairs, cfg.patch, cfg.overlap);

    TrainResult res{Vae(cfg.model_config()), nn::Adam(cfg.adam_config()), {}, {}};
    auto params = res.model.params();
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, Stream::Shuffle));
    std::mt19937_64 noise_rng(derive_seed(cfg.seed, Stream::LatentNoise));

    std::vector<std::size_t> order(data.count);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochStats stats{epoch, 0, {}};
        for (std::size_t begin = 0; begin < data.count; begin += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), data.count - begin);
            const Tensor4 noisy = data.gather(data.noisy, order, begin, n);
            const Tensor4 clean = data.gather(data.clean, order, begin, n);
            const LatentNoise eps = LatentNoise::draw(static_cast<int>(n), cfg.latent, noise_rng);

            res.model.zero_grad();
            const LossTerms t = res.model.accumulate_gradients(noisy, clean, eps, cfg.lambda_reg);
            const std::int64_t step = res.optimizer.step_count();
            if (!std::isfinite(t.mse)) throw TrainingError(step, "mse");
            if (!std::isfinite(t.kl)) throw TrainingError(step, "kl");
            if (!std::isfinite(t.reg)) throw TrainingError(step, "reg");
            for (int s = 0; s < kSubspaces; ++s)
                if (!std::isfinite(t.tran[s])) throw TrainingError(step, std::string("tran_") + kSubspaceNames[s]);
            try {
                res.optimizer.step(params);
            } catch (const NonFiniteError&) {
                throw TrainingError(step, "gradient");
            }

            stats.mean.mse += t.mse;
            stats.mean.kl += t.kl;
            stats.mean.reg += t.reg;
            for (int s = 0; s < kSubspaces; ++s) stats.mean.tran[s] += t.tran[s];
            ++stats.steps;
        }
        const double inv = stats.steps > 0 ? 1.0 / static_cast<double>(stats.steps) : 0.0;
        stats.mean.mse *= inv;
        stats.mean.kl *= inv;
        stats.mean.reg *= inv;
        for (auto& v : stats.mean.tran) v *= inv;
        res.history.push_back(stats);
        if (on_epoch) on_epoch(stats, res.model, res.optimizer);
    }
    res.rng_state = engine_state(noise_rng);
    return res;
}

inline Tensor4 as_batch(const PatchSet& ps) {
    Tensor4 batch(static_cast<int>(ps.count()), ps.grid.patch, ps.grid.patch, 3);
    batch.v = ps.data;
    return batch;
}

/// Weighted assembly of decoded YUV patches laid out like `layout`, then RGB in [0, 1].
inline ImageBuffer reassemble_rgb(PatchSet layout, const Tensor4& decoded, const DeblockFilter& deblock = {}) {
    if (decoded.v.size() != layout.data.size()) throw ShapeError("decoded patches do not match the patch grid");
    layout.data = decoded.v;
    return clip01(yuv_to_rgb(deblock_hook(assemble(layout), deblock)));
}

/// Full inference path for one RGB image: YUV, patches, encode (z = mu), transform,
/// decode, weighted assembly, optional deblocking, back to RGB, clip to [0, 1].
inline ImageBuffer denoise_image(const ImageBuffer& rgb, Vae& model, int overlap, const DeblockFilter& deblock = {}) {
    if (rgb.space() != ColorSpace::RGB) throw InvalidArgument("denoise_image expects an RGB image");
    PatchSet ps = decompose(rgb_to_yuv(rgb), model.patch(), overlap);
    const Tensor4 out = model.denoise_patches(as_batch(ps));
    return reassemble_rgb(std::move(ps), out, deblock);
}

/// Metrics of noisy-vs-clean and denoised-vs-clean for every pair, plus the mean row.
inline MetricsReport evaluate(const std::vector<ImagePair>& pairs, Vae& model, int overlap,
                              std::vector<ImageBuffer>* denoised_out = nullptr) {
    if (pairs.empty()) throw InvalidArgument("evaluation set is empty");
    MetricsReport report;
    for (const auto& p : pairs) {
        const ImageBuffer den = denoise_image(p.noisy, model, overlap);
        MetricsRow row;
        row.id = p.id;
        row.psnr_noisy = psnr(p.noisy, p.clean);
        row.psnr_denoised = psnr(den, p.clean);
        row.ssim_noisy = ssim(p.noisy, p.clean);
        row.ssim_denoised = ssim(den, p.clean);
        row.uqi_noisy = uqi(p.noisy, p.clean);
        row.uqi_denoised = uqi(den, p.clean);
        report.rows.push_back(row);
        if (denoised_out) denoised_out->push_back(den);
    }
    report.finalize();
    return report;
}

/// Trains, then for each extra round appends the current model's denoised outputs
/// (paired with the same clean targets) to the training set and retrains.
inline TrainResult train_recursive(const std::vector<ImagePair>& pairs, const TrainConfig& cfg, int rounds,
                                   const EpochCallback& on_epoch = {}) {
    if (rounds < 0) throw InvalidArgument("recursive rounds must be non-negative");
    TrainResult res = train_vae(pairs, cfg, on_epoch);
    std::vector<ImagePair> augmented = pairs;
    for (int r = 1; r <= rounds; ++r) {
        for (const auto& p : pairs)
            augmented.push_back(
                {denoise_image(p.noisy, res.model, cfg.overlap), p.clean, p.id + "_round" + std::to_string(r)});
        res = train_vae(augmented, cfg, on_epoch);
    }
    return res;
}

} // namespace rse
