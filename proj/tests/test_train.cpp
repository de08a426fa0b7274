#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "rse/checkpoint.hpp"
#include "rse/data.hpp"
#include "rse/train.hpp"

using namespace rse;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(std::uint64_t seed) {
    TrainConfig c;
    c.patch = 8;
    c.overlap = 2;
    c.latent = 4;
    c.batch = 16;
    c.epochs = 2;
    c.seed = seed;
    return c;
}

std::vector<ImagePair> tiny_pairs(int count, int size, std::uint64_t seed) {
    std::vector<ImagePair> out;
    for (int i = 0; i < count; ++i) {
        ImageBuffer clean = make_synthetic_scene(size, size, seed + i);
        out.push_back({add_gaussian_noise(clean, 0.1, seed ^ i), clean, "p" + std::to_string(i)});
    }
    return out;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

std::vector<Matrix> param_values(Vae& m) {
    std::vector<Matrix> out;
    for (auto* p : m.params()) out.push_back(p->value);
    return out;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("rse_test_train_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST(TrainConfig, DefaultsAndValidation) {
    TrainConfig c;
    EXPECT_EQ(c.latent, 72);
    EXPECT_EQ(c.batch, 128);
    EXPECT_EQ(c.base_lr, 0.001);
    EXPECT_EQ(c.lr_decay, 0.95);
    EXPECT_EQ(c.decay_steps, 1000);
    EXPECT_NO_THROW(c.validate());
    c.overlap = 16;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = TrainConfig{};
    c.batch = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    nlohmann::json j = TrainConfig{};
    EXPECT_EQ(j.get<TrainConfig>().patch, 16);
}

TEST(PatchPairs, AlignedByGridIndex) {
    auto pairs = tiny_pairs(2, 14, 1);
    PatchPairs pp = extract_patch_pairs(pairs, 8, 2);
    EXPECT_EQ(pp.count, 8u);  // 2x2 grid per image
    PatchSet first = decompose(rgb_to_yuv(pairs[1].noisy), 8, 2);
    EXPECT_TRUE(std::equal(first.patch(3).begin(), first.patch(3).end(), pp.noisy.begin() + 7 * pp.stride()));
    PatchSet clean = decompose(rgb_to_yuv(pairs[1].clean), 8, 2);
    EXPECT_TRUE(std::equal(clean.patch(3).begin(), clean.patch(3).end(), pp.clean.begin() + 7 * pp.stride()));
}

TEST(TrainVae, StepCountPerEpoch) {
    EXPECT_EQ(steps_per_epoch(441, 128), 4);
    EXPECT_EQ(steps_per_epoch(128, 128), 1);
    EXPECT_EQ(steps_per_epoch(4000, 128), 32);

    TrainConfig c = tiny_config(2);
    c.batch = 128;
    c.epochs = 1;
    auto r = train_vae(tiny_pairs(1, 14, 3), c);
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history[0].steps, 1);
    EXPECT_EQ(r.optimizer.step_count(), 1);

    c.batch = 3;  // 4 patches -> 2 steps
    EXPECT_EQ(train_vae(tiny_pairs(1, 14, 3), c).history[0].steps, 2);
}

TEST(TrainVae, DeterministicGivenSeed) {
    auto pairs = tiny_pairs(3, 20, 4);
    auto a = train_vae(pairs, tiny_config(5));
    auto b = train_vae(pairs, tiny_config(5));
    EXPECT_EQ(param_values(a.model), param_values(b.model));
    EXPECT_EQ(a.rng_state, b.rng_state);
    auto c = train_vae(pairs, tiny_config(6));
    EXPECT_NE(param_values(a.model), param_values(c.model));
}

TEST(TrainVae, LossDecreases) {
    TrainConfig c = tiny_config(7);
    c.epochs = 8;
    c.base_lr = 3e-3;
    auto r = train_vae(tiny_pairs(6, 20, 8), c);
    EXPECT_LT(r.history.back().mean.vae(), r.history.front().mean.vae());
}

TEST(TrainVae, CallbackPerEpoch) {
    int calls = 0;
    std::int64_t last_step = 0;
    train_vae(tiny_pairs(1, 14, 9), tiny_config(10), [&](const EpochStats& s, Vae&, const nn::Adam& opt) {
        ++calls;
        EXPECT_EQ(s.epoch, calls);
        last_step = opt.step_count();
    });
    EXPECT_EQ(calls, 2);
    EXPECT_EQ(last_step, 2);
}

TEST(TrainVae, NonFiniteLossAborts) {
    auto pairs = tiny_pairs(1, 14, 11);
    pairs[0].noisy.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
        train_vae(pairs, tiny_config(12));
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_EQ(e.step(), 0);
        EXPECT_EQ(e.term(), "mse");
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
    }
}

TEST(TrainVae, RejectsEmptyOrMisfitData) {
    EXPECT_THROW(train_vae({}, tiny_config(1)), InvalidArgument);
    EXPECT_THROW(train_vae(tiny_pairs(1, 16, 1), tiny_config(1)), GeometryError);
}

TEST(Denoise, ShapeDeterminismAndGeometry) {
    Vae m(ModelConfig{8, 4, 13});
    ImageBuffer img = make_synthetic_scene(20, 26, 14);
    ImageBuffer a = denoise_image(img, m, 2);
    EXPECT_TRUE(a.same_shape(img));
    EXPECT_EQ(a, denoise_image(img, m, 2));
    for (double v : a.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_THROW(denoise_image(make_synthetic_scene(21, 20, 1), m, 2), GeometryError);
    EXPECT_THROW(denoise_image(ImageBuffer(20, 20, ColorSpace::YUV), m, 2), InvalidArgument);
}

TEST(Evaluate, RowsAndInfiniteNoisyPsnr) {
    Vae m(ModelConfig{8, 4, 15});
    std::vector<ImagePair> same;
    for (int i = 0; i < 2; ++i) {
        ImageBuffer c = make_synthetic_scene(14, 14, 16 + i);
        same.push_back({c, c, "s" + std::to_string(i)});
    }
    std::vector<ImageBuffer> outs;
    MetricsReport r = evaluate(same, m, 2, &outs);
    EXPECT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(outs.size(), 2u);
    EXPECT_EQ(r.rows[0].psnr_noisy, kInfinitePsnr);
    EXPECT_TRUE(std::isfinite(r.rows[0].psnr_denoised));
    EXPECT_EQ(r.rows[1].psnr_denoised, psnr(outs[1], same[1].clean));
    EXPECT_THROW(evaluate({}, m, 2), InvalidArgument);
}

TEST(Evaluate, CalibratedNoisyColumn) {
    std::vector<ImagePair> pairs;
    for (int i = 0; i < 10; ++i) {
        ImageBuffer c = make_synthetic_scene(64, 64, 100 + i);
        pairs.push_back({add_gaussian_noise(c, kCalibratedSigma, i), c, "c"});
    }
    Vae m(ModelConfig{16, 8, 1});
    EXPECT_NEAR(evaluate(pairs, m, 4).mean.psnr_noisy, 16.64, 1.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    TempDir t("ckpt");
    auto pairs = tiny_pairs(2, 14, 17);
    TrainConfig cfg = tiny_config(18);
    auto r = train_vae(pairs, cfg);
    nlohmann::json jc = cfg;
    save_checkpoint(t.path / "a", r.model, r.optimizer, jc, r.rng_state);

    Checkpoint ck = load_checkpoint(t.path / "a");
    EXPECT_EQ(param_values(ck.model), param_values(r.model));
    EXPECT_EQ(ck.step, r.optimizer.step_count());
    EXPECT_EQ(ck.rng_state, r.rng_state);
    EXPECT_EQ(ck.config, jc);
    EXPECT_TRUE(ck.rl_meta.is_null());
    ASSERT_EQ(ck.optimizer.first_moments().size(), r.optimizer.first_moments().size());
    for (std::size_t i = 0; i < ck.optimizer.first_moments().size(); ++i) {
        EXPECT_EQ(ck.optimizer.first_moments()[i], r.optimizer.first_moments()[i]);
        EXPECT_EQ(ck.optimizer.second_moments()[i], r.optimizer.second_moments()[i]);
    }
    EXPECT_EQ(denoise_image(pairs[0].noisy, ck.model, 2), denoise_image(pairs[0].noisy, r.model, 2));

    save_checkpoint(t.path / "b", ck.model, ck.optimizer, ck.config, ck.rng_state);
    EXPECT_EQ(read_bytes(t.path / "a" / "params.bin"), read_bytes(t.path / "b" / "params.bin"));
    EXPECT_EQ(read_bytes(t.path / "a" / "manifest.json"), read_bytes(t.path / "b" / "manifest.json"));

    nlohmann::json meta{{"best_psnr", 31.5}};
    save_checkpoint(t.path / "c", r.model, r.optimizer, jc, r.rng_state, meta);
    EXPECT_EQ(load_checkpoint(t.path / "c").rl_meta, meta);
}

TEST(Checkpoint, RejectsDamage) {
    TempDir t("damage");
    Vae m(ModelConfig{8, 4, 19});
    nn::Adam opt;
    save_checkpoint(t.path / "ok", m, opt, nlohmann::json{{"x", 1}}, "");
    EXPECT_NO_THROW(load_checkpoint(t.path / "ok"));
    EXPECT_THROW(load_checkpoint(t.path / "missing"), FormatError);

    fs::copy(t.path / "ok", t.path / "hash", fs::copy_options::recursive);
    nlohmann::json man = read_manifest(t.path / "hash");
    man["config"]["x"] = 2;
    std::ofstream(t.path / "hash" / "manifest.json") << man.dump();
    EXPECT_THROW(load_checkpoint(t.path / "hash"), FormatError);

    fs::copy(t.path / "ok", t.path / "trail", fs::copy_options::recursive);
    std::ofstream(t.path / "trail" / "params.bin", std::ios::app | std::ios::binary) << 'x';
    EXPECT_THROW(load_checkpoint(t.path / "trail"), FormatError);

    fs::copy(t.path / "ok", t.path / "short", fs::copy_options::recursive);
    fs::resize_file(t.path / "short" / "params.bin", 100);
    EXPECT_THROW(load_checkpoint(t.path / "short"), FormatError);

    fs::copy(t.path / "ok", t.path / "shape", fs::copy_options::recursive);
    man = read_manifest(t.path / "shape");
    man["tensors"][0]["shape"][0] = 99;
    std::ofstream(t.path / "shape" / "manifest.json") << man.dump();
    EXPECT_THROW(load_checkpoint(t.path / "shape"), FormatError);
}

TEST(ConfigHash, Fnv1a) {
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(TrainRecursive, AppendsDenoisedRounds) {
    auto pairs = tiny_pairs(2, 14, 20);
    TrainConfig c = tiny_config(21);
    c.epochs = 1;
    std::vector<std::int64_t> steps;
    auto r = train_recursive(pairs, c, 1, [&](const EpochStats& s, Vae&, const nn::Adam&) { steps.push_back(s.steps); });
    ASSERT_EQ(steps.size(), 2u);
    EXPECT_EQ(steps[0], steps_per_epoch(8, 16));
    EXPECT_EQ(steps[1], steps_per_epoch(16, 16));
    EXPECT_THROW(train_recursive(pairs, c, -1), InvalidArgument);
    auto zero = train_recursive(pairs, c, 0);
    auto plain = train_vae(pairs, c);
    EXPECT_EQ(param_values(zero.model), param_values(plain.model));
}
