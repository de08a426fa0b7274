#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>
#include <png.h>

#include "rse/data.hpp"
#include "rse/metrics.hpp"

using namespace rse;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("rse_test_data_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_raw_png(const fs::path& p, int w, int h, png_uint_32 format, const std::vector<std::uint8_t>& bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = format;
    ASSERT_TRUE(png_image_write_to_file(&img, p.c_str(), 0, bytes.data(), 0, nullptr));
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

} // namespace

TEST(LoadImage, ByteScaling) {
    TempDir t("load");
    write_raw_png(t.path / "a.png", 3, 1, PNG_FORMAT_RGB, {255, 0, 128, 1, 2, 3, 254, 127, 64});
    ImageBuffer img = load_image(t.path / "a.png");
    EXPECT_EQ(img.height(), 1);
    EXPECT_EQ(img.width(), 3);
    EXPECT_EQ(img.space(), ColorSpace::RGB);
    EXPECT_EQ(img.at(0, 0, 0), 1.0);
    EXPECT_EQ(img.at(0, 0, 1), 0.0);
    EXPECT_EQ(img.at(0, 0, 2), 128.0 / 255.0);
    EXPECT_NEAR(img.at(0, 0, 2), 0.50196, 1e-5);
    EXPECT_EQ(img.at(0, 2, 2), 64.0 / 255.0);
}

TEST(LoadImage, Rejections) {
    TempDir t("reject");
    EXPECT_THROW(load_image(t.path / "missing.png"), FormatError);
    write_raw_png(t.path / "gray.png", 2, 2, PNG_FORMAT_GRAY, {0, 1, 2, 3});
    EXPECT_THROW(load_image(t.path / "gray.png"), FormatError);
    write_raw_png(t.path / "rgba.png", 1, 1, PNG_FORMAT_RGBA, {1, 2, 3, 4});
    EXPECT_THROW(load_image(t.path / "rgba.png"), FormatError);
    std::ofstream(t.path / "junk.png") << "not a png";
    EXPECT_THROW(load_image(t.path / "junk.png"), FormatError);
}

TEST(SaveImage, RoundTripsBytes) {
    TempDir t("save");
    ImageBuffer img(4, 5);
    for (std::size_t i = 0; i < img.size(); ++i) img.values()[i] = static_cast<double>(i * 7 % 256) / 255.0;
    save_image(img, t.path / "x.png");
    EXPECT_EQ(load_image(t.path / "x.png"), img);
}

TEST(Noise, ZeroSigmaIsIdentity) {
    ImageBuffer img(8, 8, ColorSpace::RGB, 0.25);
    EXPECT_EQ(add_gaussian_noise(img, 0.0, 3), img);
    EXPECT_THROW(add_gaussian_noise(img, -0.1, 3), InvalidArgument);
    EXPECT_THROW(add_gaussian_noise(ImageBuffer(2, 2, ColorSpace::YUV), 0.1, 3), InvalidArgument);
}

TEST(Noise, CalibratedSigmaGivesTargetPsnr) {
    ImageBuffer gray(256, 256, ColorSpace::RGB, 0.5);
    const double p = psnr(add_gaussian_noise(gray, kCalibratedSigma, 1), gray);
    EXPECT_NEAR(p, 16.6, 1.0);
}

TEST(Noise, ZeroMeanOnUnclippedPixels) {
    const double sigma = 0.1;
    ImageBuffer gray(600, 600, ColorSpace::RGB, 0.5);  // 1.08e6 samples, 0.5 +- 4 sigma stays inside [0, 1]
    ImageBuffer noisy = add_gaussian_noise(gray, sigma, 9);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gray.size(); ++i) {
        const double v = noisy.values()[i];
        if (v > 0.0 && v < 1.0) {
            sum += v - 0.5;
            ++n;
        }
    }
    ASSERT_GE(n, 1000000u);
    EXPECT_LE(std::abs(sum / n), 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST(Noise, ClippingIsTheOnlyNonlinearity) {
    const double sigma = 0.05;
    ImageBuffer img(32, 32, ColorSpace::RGB, 0.5);
    for (int y = 0; y < 32; ++y) img.at(y, 0, 0) = 0.0;  // some clipped pixels
    ImageBuffer noisy = add_gaussian_noise(img, sigma, 4);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0.0, sigma);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double e = nd(rng);
        const double c = img.values()[i];
        if (c - 4 * sigma >= 0.0 && c + 4 * sigma <= 1.0)
            EXPECT_EQ(noisy.values()[i], c + e);
        else
            EXPECT_EQ(noisy.values()[i], std::clamp(c + e, 0.0, 1.0));
    }
}

TEST(Noise, DeterministicPerSeed) {
    ImageBuffer img(16, 16, ColorSpace::RGB, 0.5);
    EXPECT_EQ(add_gaussian_noise(img, 0.1, 5), add_gaussian_noise(img, 0.1, 5));
    EXPECT_NE(add_gaussian_noise(img, 0.1, 5), add_gaussian_noise(img, 0.1, 6));
}

TEST(ImageSeed, InjectiveOverIndex) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 5000; ++i) seen.insert(image_seed(12345, i));
    EXPECT_EQ(seen.size(), 5000u);
}

TEST(PairDataset, BuildsInFilenameOrder) {
    TempDir t("pairs");
    for (const char* name : {"c.png", "a.png", "b.png"}) save_image(ImageBuffer(4, 4, ColorSpace::RGB, 0.5), t.path / name);
    std::ofstream(t.path / "notes.txt") << "ignored";

    auto clean = build_pair_dataset(t.path, 0.0, 1);
    ASSERT_EQ(clean.size(), 3u);
    EXPECT_EQ(clean[0].id, "a");
    EXPECT_EQ(clean[1].id, "b");
    EXPECT_EQ(clean[2].id, "c");
    for (const auto& p : clean) EXPECT_EQ(p.noisy, p.clean);

    auto a = build_pair_dataset(t.path, 0.1, 7);
    auto b = build_pair_dataset(t.path, 0.1, 7);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].noisy, b[i].noisy);
    // identical clean images still get distinct noise
    EXPECT_NE(a[0].noisy, a[1].noisy);
    EXPECT_EQ(a[1].noisy, add_gaussian_noise(a[1].clean, 0.1, 7 ^ 1));
}

TEST(PairDataset, Errors) {
    TempDir t("empty");
    EXPECT_THROW(build_pair_dataset(t.path, 0.1, 1), FormatError);
    EXPECT_THROW(build_pair_dataset(t.path / "nope", 0.1, 1), FormatError);
    std::ofstream(t.path / "bad.png") << "x";
    EXPECT_THROW(build_pair_dataset(t.path, 0.1, 1), FormatError);
}

TEST(PairDataset, WriteAndReloadIsByteIdentical) {
    TempDir t("roundtrip");
    write_synthetic_fixture(t.path / "src", 3, 16, 11);
    auto pairs = build_pair_dataset(t.path / "src", kCalibratedSigma, 2);
    write_pair_dataset(t.path / "out1", pairs, kCalibratedSigma, 2);
    write_pair_dataset(t.path / "out2", build_pair_dataset(t.path / "src", kCalibratedSigma, 2), kCalibratedSigma, 2);
    for (const char* f : {"manifest.json", "noisy/scene_0001.png", "clean/scene_0002.png"})
        EXPECT_EQ(read_file(t.path / "out1" / f), read_file(t.path / "out2" / f)) << f;

    auto back = load_pair_dataset(t.path / "out1");
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[2].id, "scene_0002");
    EXPECT_EQ(back[0].clean, pairs[0].clean);  // clean values are already byte-exact
    EXPECT_THROW(load_pair_dataset(t.path / "src"), FormatError);
}

TEST(SyntheticFixture, DeterministicAndInRange) {
    EXPECT_EQ(make_synthetic_scene(32, 32, 3), make_synthetic_scene(32, 32, 3));
    EXPECT_NE(make_synthetic_scene(32, 32, 3), make_synthetic_scene(32, 32, 4));
    const ImageBuffer scene = make_synthetic_scene(32, 32, 5);
    for (double v : scene.values()) {
        EXPECT_GE(v, 0.12);
        EXPECT_LE(v, 0.88);
    }
}
