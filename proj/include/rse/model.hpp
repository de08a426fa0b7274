#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rse/error.hpp"
#include "rse/nn/layers.hpp"
#include "rse/nn/tensor.hpp"

namespace rse {

using nn::Matrix;
using nn::Param;
using nn::Tensor4;

inline constexpr int kSubspaces = 3; // Y, U, V
inline constexpr std::array<const char*, kSubspaces> kSubspaceNames{"y", "u", "v"};

struct ModelConfig {
    int patch = 16;          // D, divisible by 4
    int latent = 72;         // d_z per subspace
    std::uint64_t seed = 0;  // weight initialisation
};

struct NamedParam {
    std::string name;
    Param* param;
    enum class Group { Encoder, Decoder, Transform } group;
    int subspace; // -1 for the decoder
};

/// One channel's encoder: 5 convs and 2 fully connected layers, emitting [mu | logvar].
class EncoderHead {
public:
    EncoderHead() = default;
    EncoderHead(int patch, int latent, std::mt19937_64& rng)
        : latent_(latent), feat_(patch / 4),
          conv_{nn::Conv2d(1, 8, 3, 1, 1), nn::Conv2d(8, 16, 3, 2, 1), nn::Conv2d(16, 32, 3, 2, 1),
                nn::Conv2d(32, 32, 3, 1, 1), nn::Conv2d(32, 32, 3, 1, 1)},
          fc1_(feat_ * feat_ * 32, 256), fc2_(256, 2 * latent) {
        for (auto& c : conv_) c.init(nn::Init::He, rng);
        fc1_.init(nn::Init::He, rng);
        fc2_.init(nn::Init::Glorot, rng);
    }

    /// x: (n, D, D, 1) -> (n, 2*latent) laid out as [mu | logvar].
    Matrix forward(const Tensor4& x) {
        Tensor4 h = x;
        for (std::size_t i = 0; i < conv_.size(); ++i) h = act_[i].forward(conv_[i].forward(h));
        Matrix f = act_[5].forward(fc1_.forward(Matrix(h.rows())));
        return fc2_.forward(f);
    }

    /// Accumulates parameter gradients from dL/d[mu | logvar]; the input gradient is not needed.
    void backward(const Matrix& dout) {
        Matrix g = act_[5].backward(fc2_.backward(dout));
        g = fc1_.backward(g);
        Tensor4 t = Tensor4::from_matrix(g).reshaped(static_cast<int>(g.rows()), feat_, feat_, 32);
        for (int i = static_cast<int>(conv_.size()) - 1; i >= 0; --i) {
            t = act_[i].backward(t);
            t = conv_[i].backward(t, i > 0);
        }
    }

    void collect(std::vector<NamedParam>& out, const std::string& prefix, int subspace) {
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            out.push_back({prefix + ".conv" + std::to_string(i + 1) + ".weight", &conv_[i].weight,
                           NamedParam::Group::Encoder, subspace});
            out.push_back({prefix + ".conv" + std::to_string(i + 1) + ".bias", &conv_[i].bias,
                           NamedParam::Group::Encoder, subspace});
        }
        out.push_back({prefix + ".fc1.weight", &fc1_.weight, NamedParam::Group::Encoder, subspace});
        out.push_back({prefix + ".fc1.bias", &fc1_.bias, NamedParam::Group::Encoder, subspace});
        out.push_back({prefix + ".fc2.weight", &fc2_.weight, NamedParam::Group::Encoder, subspace});
        out.push_back({prefix + ".fc2.bias", &fc2_.bias, NamedParam::Group::Encoder, subspace});
    }

    nn::Dense& output_layer() { return fc2_; }

private:
    int latent_ = 0, feat_ = 0;
    std::array<nn::Conv2d, 5> conv_;
    std::array<nn::Relu, 6> act_;
    nn::Dense fc1_, fc2_;
};

/// Per-subspace latent transformation: three d_z -> d_z layers, ReLU after the first two.
class TransformMLP {
public:
    TransformMLP() = default;
    TransformMLP(int latent, std::mt19937_64& rng) : fc_{nn::Dense(latent, latent), nn::Dense(latent, latent),
                                                         nn::Dense(latent, latent)} {
        fc_[0].init(nn::Init::He, rng);
        fc_[1].init(nn::Init::He, rng);
        fc_[2].init(nn::Init::Glorot, rng);
    }

    int dim() const { return fc_[0].in_features(); }

    Matrix forward(const Matrix& z) {
        if (z.cols() != dim()) throw ShapeError("transform expects latent dimension " + std::to_string(dim()));
        Matrix h = act_[0].forward(fc_[0].forward(z));
        h = act_[1].forward(fc_[1].forward(h));
        return fc_[2].forward(h);
    }

    /// Accumulates parameter gradients; returns dL/dz.
    Matrix backward(const Matrix& dy) {
        Matrix g = act_[1].backward(fc_[2].backward(dy));
        g = act_[0].backward(fc_[1].backward(g));
        return fc_[0].backward(g);
    }

    std::array<nn::Dense, 3>& layers() { return fc_; }
    const std::array<nn::Dense, 3>& layers() const { return fc_; }

    void collect(std::vector<NamedParam>& out, const std::string& prefix, int subspace) {
        for (std::size_t i = 0; i < fc_.size(); ++i) {
            out.push_back({prefix + ".fc" + std::to_string(i + 1) + ".weight", &fc_[i].weight,
                           NamedParam::Group::Transform, subspace});
            out.push_back({prefix + ".fc" + std::to_string(i + 1) + ".bias", &fc_[i].bias,
                           NamedParam::Group::Transform, subspace});
        }
    }

private:
    std::array<nn::Dense, 3> fc_;
    std::array<nn::Relu, 2> act_;
};

/// Fully connected lift, then upsample / 3 transposed convs / upsample / 2 transposed convs.
class Decoder {
public:
    Decoder() = default;
    Decoder(int patch, int latent_total, std::mt19937_64& rng)
        : feat_(patch / 4), fc_(latent_total, feat_ * feat_ * 32),
          tconv_{nn::ConvTranspose2d(32, 32, 3, 1, 1), nn::ConvTranspose2d(32, 32, 3, 1, 1),
                 nn::ConvTranspose2d(32, 16, 3, 1, 1), nn::ConvTranspose2d(16, 16, 3, 1, 1),
                 nn::ConvTranspose2d(16, 3, 3, 1, 1)} {
        fc_.init(nn::Init::He, rng);
        for (std::size_t i = 0; i + 1 < tconv_.size(); ++i) tconv_[i].init(nn::Init::He, rng);
        tconv_.back().init(nn::Init::Glorot, rng);
    }

    /// z: (n, 3*d_z) -> (n, D, D, 3), linear output.
    Tensor4 forward(const Matrix& z) {
        Matrix h = act_[0].forward(fc_.forward(z));
        Tensor4 t = Tensor4::from_matrix(h).reshaped(static_cast<int>(h.rows()), feat_, feat_, 32);
        t = nn::upsample2x(t);
        for (int i = 0; i < 3; ++i) t = act_[i + 1].forward(tconv_[i].forward(t));
        t = nn::upsample2x(t);
        t = act_[4].forward(tconv_[3].forward(t));
        return tconv_[4].forward(t);
    }

    /// Accumulates parameter gradients; returns dL/dz.
    Matrix backward(const Tensor4& dy) {
        Tensor4 g = tconv_[4].backward(dy);
        g = tconv_[3].backward(act_[4].backward(g));
        g = nn::upsample2x_backward(g);
        for (int i = 2; i >= 0; --i) g = tconv_[i].backward(act_[i + 1].backward(g));
        g = nn::upsample2x_backward(g);
        Matrix gm(g.rows());
        return fc_.backward(act_[0].backward(gm));
    }

    void collect(std::vector<NamedParam>& out, const std::string& prefix) {
        out.push_back({prefix + ".fc.weight", &fc_.weight, NamedParam::Group::Decoder, -1});
        out.push_back({prefix + ".fc.bias", &fc_.bias, NamedParam::Group::Decoder, -1});
        for (std::size_t i = 0; i < tconv_.size(); ++i) {
            out.push_back({prefix + ".tconv" + std::to_string(i + 1) + ".weight", &tconv_[i].weight,
                           NamedParam::Group::Decoder, -1});
            out.push_back({prefix + ".tconv" + std::to_string(i + 1) + ".bias", &tconv_[i].bias,
                           NamedParam::Group::Decoder, -1});
        }
    }

private:
    int feat_ = 0;
    nn::Dense fc_;
    std::array<nn::ConvTranspose2d, 5> tconv_;
    std::array<nn::Relu, 5> act_;
};

// Loss terms -------------------------------------------------------------------

/// Squared Frobenius norm of (a - b).
inline double sq_dist(const Tensor4& a, const Tensor4& b) {
    if (!a.same_shape(b)) throw ShapeError("shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return s;
}

/// (||rec_clean - clean||^2 + ||rec_transformed - clean||^2) / batch.
inline double loss_mse(const Tensor4& rec_clean, const Tensor4& rec_transformed, const Tensor4& clean) {
    return (sq_dist(rec_clean, clean) + sq_dist(rec_transformed, clean)) / clean.n;
}

/// -1/2 sum(1 + logvar - exp(logvar) - mu^2) / batch. Rows are samples.
inline double loss_kl(const Matrix& mu, const Matrix& logvar, double batch = 0.0) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) throw ShapeError("mu/logvar shape mismatch");
    const double n = batch > 0.0 ? batch : static_cast<double>(mu.rows());
    return -0.5 * (1.0 + logvar.array() - logvar.array().exp() - mu.array().square()).sum() / n;
}

/// lambda * sum of squared entries of the given parameter blocks.
inline double loss_reg(const std::vector<const Param*>& params, double lambda) {
    double s = 0.0;
    for (const auto* p : params) s += p->value.squaredNorm();
    return lambda * s;
}

/// ||T(z_noisy) - z_clean||^2 / batch for one subspace.
inline double loss_tran(const Matrix& transformed, const Matrix& z_clean) {
    if (transformed.rows() != z_clean.rows() || transformed.cols() != z_clean.cols())
        throw ShapeError("subspace mismatch in transformation loss");
    return (transformed - z_clean).squaredNorm() / static_cast<double>(z_clean.rows());
}

/// mu + exp(logvar / 2) * eps.
inline Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& eps) {
    if (mu.rows() != eps.rows() || mu.cols() != eps.cols() || mu.rows() != logvar.rows() ||
        mu.cols() != logvar.cols())
        throw ShapeError("reparameterize shape mismatch");
    return (mu.array() + (0.5 * logvar.array()).exp() * eps.array()).matrix();
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

enum class Mode { Train, Inference };

/// Training mode draws eps from `rng`; inference returns mu.
inline Matrix reparameterize(const Matrix& mu, const Matrix& logvar, Mode mode, std::mt19937_64& rng) {
    if (mode == Mode::Inference) return mu;
    return reparameterize(mu, logvar, standard_normal(mu.rows(), mu.cols(), rng));
}

struct LossTerms {
    double mse = 0.0;
    double kl = 0.0;
    double reg = 0.0;
    std::array<double, kSubspaces> tran{};

    double vae() const { return mse + kl + reg; }
    double tran_total() const { return tran[0] + tran[1] + tran[2]; }
};

/// Which objectives contribute gradients in a training pass.
struct LossSelection {
    bool vae = true;
    bool tran = true;
};

/// Standard-normal draws for one batch: rows [0, n) belong to noisy patches, [n, 2n) to clean ones.
struct LatentNoise {
    std::array<Matrix, kSubspaces> eps;

    static LatentNoise draw(int pairs, int latent, std::mt19937_64& rng) {
        LatentNoise ln;
        for (auto& e : ln.eps) e = standard_normal(2 * pairs, latent, rng);
        return ln;
    }
    static LatentNoise zeros(int pairs, int latent) {
        LatentNoise ln;
        for (auto& e : ln.eps) e = Matrix::Zero(2 * pairs, latent);
        return ln;
    }
};

struct Encoding {
    std::array<Matrix, kSubspaces> mu;
    std::array<Matrix, kSubspaces> logvar;
};

/// Extracts channel `ch` of an NHWC tensor as a single-channel tensor.
inline Tensor4 channel(const Tensor4& x, int ch) {
    Tensor4 out(x.n, x.h, x.w, 1);
    const std::size_t pixels = static_cast<std::size_t>(x.n) * x.h * x.w;
    for (std::size_t i = 0; i < pixels; ++i) out.v[i] = x.v[i * x.c + ch];
    return out;
}

inline Tensor4 concat_batch(const Tensor4& a, const Tensor4& b) {
    if (a.h != b.h || a.w != b.w || a.c != b.c) throw ShapeError("concat_batch shape mismatch");
    Tensor4 out(a.n + b.n, a.h, a.w, a.c);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return out;
}

inline Tensor4 slice_batch(const Tensor4& x, int begin, int count) {
    Tensor4 out(count, x.h, x.w, x.c);
    const auto off = static_cast<std::ptrdiff_t>(x.sample_size()) * begin;
    std::copy(x.v.begin() + off, x.v.begin() + off + static_cast<std::ptrdiff_t>(out.v.size()), out.v.begin());
    return out;
}

// The model -----------------------------------------------------------------------

/// Patch VAE with three per-channel encoders (Y, U, V), per-subspace latent
/// transformations, and a shared decoder. Patches are YUV, NHWC.
class Vae {
public:
    Vae() = default;
    explicit Vae(ModelConfig cfg) : cfg_(cfg) {
        if (cfg.patch <= 0 || cfg.patch % 4 != 0) throw InvalidArgument("patch size must be a positive multiple of 4");
        if (cfg.latent <= 0) throw InvalidArgument("latent dimension must be positive");
        std::mt19937_64 rng(cfg.seed);
        for (int s = 0; s < kSubspaces; ++s) enc_[s] = EncoderHead(cfg.patch, cfg.latent, rng);
        for (int s = 0; s < kSubspaces; ++s) tr_[s] = TransformMLP(cfg.latent, rng);
        dec_ = Decoder(cfg.patch, kSubspaces * cfg.latent, rng);
    }

    Vae(const Vae&) = default;
    Vae& operator=(const Vae&) = default;

    const ModelConfig& config() const { return cfg_; }
    int latent() const { return cfg_.latent; }
    int patch() const { return cfg_.patch; }

    EncoderHead& encoder(int s) { return enc_.at(s); }
    TransformMLP& transform_mlp(int s) { return tr_.at(s); }
    std::array<TransformMLP, kSubspaces>& transforms() { return tr_; }
    const std::array<TransformMLP, kSubspaces>& transforms() const { return tr_; }
    Decoder& decoder() { return dec_; }

    /// Channel s of each patch feeds encoder s only.
    Encoding encode(const Tensor4& patches) {
        check_patches(patches);
        Encoding e;
        for (int s = 0; s < kSubspaces; ++s) {
            Matrix out = enc_[s].forward(channel(patches, s));
            e.mu[s] = out.leftCols(cfg_.latent);
            e.logvar[s] = out.rightCols(cfg_.latent);
        }
        return e;
    }

    Matrix transform(int s, const Matrix& z) { return tr_.at(s).forward(z); }

    /// z: (n, 3*d_z) concatenated [z_y | z_u | z_v].
    Tensor4 decode(const Matrix& z) {
        if (z.cols() != kSubspaces * cfg_.latent) throw ShapeError("decoder expects 3*latent inputs");
        return dec_.forward(z);
    }

    /// Decodes transformed per-subspace latents.
    Tensor4 decode_transformed(const std::array<Matrix, kSubspaces>& z) {
        Matrix cat(z[0].rows(), kSubspaces * cfg_.latent);
        for (int s = 0; s < kSubspaces; ++s) cat.middleCols(s * cfg_.latent, cfg_.latent) = transform(s, z[s]);
        return decode(cat);
    }

    /// Inference path: encode (z = mu), transform, decode.
    Tensor4 denoise_patches(const Tensor4& noisy) {
        Encoding e = encode(noisy);
        return decode_transformed(e.mu);
    }

    std::vector<NamedParam> named_params() {
        std::vector<NamedParam> out;
        for (int s = 0; s < kSubspaces; ++s) enc_[s].collect(out, std::string("encoder_") + kSubspaceNames[s], s);
        for (int s = 0; s < kSubspaces; ++s) tr_[s].collect(out, std::string("transform_") + kSubspaceNames[s], s);
        dec_.collect(out, "decoder");
        return out;
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (auto& np : named_params()) out.push_back(np.param);
        return out;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    /// Parameters covered by the weight penalty: encoders and decoder, not the transforms.
    std::vector<const Param*> regularized_params() {
        std::vector<const Param*> out;
        for (auto& np : named_params())
            if (np.group != NamedParam::Group::Transform) out.push_back(np.param);
        return out;
    }

    /// One training pass over a batch of aligned (noisy, clean) YUV patches.
    ///
    /// Returns all loss terms and accumulates gradients for the selected objectives:
    /// the VAE objective (reconstruction of clean patches and of transformed noisy
    /// latents, KL over every encoding, weight penalty) reaches every parameter; each
    /// transformation loss reaches only its own transform, with the encoder outputs
    /// held constant.
    LossTerms accumulate_gradients(const Tensor4& noisy, const Tensor4& clean, const LatentNoise& noise,
                                   double lambda_reg, LossSelection sel = {}) {
        check_patches(noisy);
        check_patches(clean);
        if (noisy.n != clean.n) throw ShapeError("noisy and clean batches differ in size");
        const int n = noisy.n;
        const int d = cfg_.latent;
        const double inv_n = 1.0 / n;

        const Tensor4 both = concat_batch(noisy, clean);
        std::array<Matrix, kSubspaces> mu, logvar, z, tz;
        Matrix dec_in(2 * n, kSubspaces * d);
        LossTerms terms;
        for (int s = 0; s < kSubspaces; ++s) {
            Matrix out = enc_[s].forward(channel(both, s));
            mu[s] = out.leftCols(d);
            logvar[s] = out.rightCols(d);
            if (noise.eps[s].rows() != 2 * n || noise.eps[s].cols() != d) throw ShapeError("latent noise shape mismatch");
            z[s] = reparameterize(mu[s], logvar[s], noise.eps[s]);
            tz[s] = tr_[s].forward(z[s].topRows(n));
            dec_in.block(0, s * d, n, d) = z[s].bottomRows(n);
            dec_in.block(n, s * d, n, d) = tz[s];
            terms.kl += loss_kl(mu[s], logvar[s], n);
            terms.tran[s] = loss_tran(tz[s], z[s].bottomRows(n));
        }
        const Tensor4 rec = dec_.forward(dec_in);
        const Tensor4 rec_clean = slice_batch(rec, 0, n);
        const Tensor4 rec_trans = slice_batch(rec, n, n);
        terms.mse = loss_mse(rec_clean, rec_trans, clean);
        terms.reg = loss_reg(regularized_params(), lambda_reg);

        // dL_mse / d rec
        Tensor4 drec(2 * n, rec.h, rec.w, rec.c);
        if (sel.vae) {
            const std::size_t half = rec_clean.v.size();
            for (std::size_t i = 0; i < half; ++i) {
                drec.v[i] = 2.0 * inv_n * (rec.v[i] - clean.v[i]);
                drec.v[half + i] = 2.0 * inv_n * (rec.v[half + i] - clean.v[i]);
            }
        }
        const Matrix ddec_in = sel.vae ? dec_.backward(drec) : Matrix::Zero(2 * n, kSubspaces * d);

        for (int s = 0; s < kSubspaces; ++s) {
            Matrix dz(2 * n, d);
            dz.bottomRows(n) = ddec_in.block(0, s * d, n, d);
            if (sel.tran) {
                // Encoder outputs are constants for this loss: only T_s parameters move.
                Matrix dtz = 2.0 * inv_n * (tz[s] - z[s].bottomRows(n));
                tr_[s].backward(dtz);
            }
            if (sel.vae) {
                dz.topRows(n) = tr_[s].backward(ddec_in.block(n, s * d, n, d));
                const Matrix std_half = (0.5 * logvar[s].array()).exp().matrix();
                Matrix dout(2 * n, 2 * d);
                dout.leftCols(d) = dz + inv_n * mu[s];
                dout.rightCols(d) = (dz.array() * noise.eps[s].array() * 0.5 * std_half.array()).matrix() -
                                    (0.5 * inv_n * (1.0 - logvar[s].array().exp())).matrix();
                enc_[s].backward(dout);
            }
        }
        if (sel.vae && lambda_reg != 0.0) {
            for (auto& np : named_params())
                if (np.group != NamedParam::Group::Transform) np.param->grad += 2.0 * lambda_reg * np.param->value;
        }
        return terms;
    }

private:
    void check_patches(const Tensor4& p) const {
        if (p.h != cfg_.patch || p.w != cfg_.patch || p.c != 3)
            throw ShapeError("expected patches of shape (n," + std::to_string(cfg_.patch) + "," +
                             std::to_string(cfg_.patch) + ",3), got " + p.shape_string());
    }

    ModelConfig cfg_;
    std::array<EncoderHead, kSubspaces> enc_;
    std::array<TransformMLP, kSubspaces> tr_;
    Decoder dec_;
};

} // namespace rse
