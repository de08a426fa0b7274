#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "rse/patch.hpp"

using namespace rse;

namespace {

ImageBuffer random_image(int h, int w, std::mt19937_64& rng) {
    ImageBuffer img(h, w);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.values()) v = u(rng);
    return img;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

} // namespace

TEST(PatchGrid, Counts) {
    EXPECT_EQ(PatchGrid::make(256, 256, 16, 4).count(), 441);
    EXPECT_EQ(PatchGrid::make(256, 256, 16, 4).rows(), 21);
    EXPECT_EQ(PatchGrid::make(88, 88, 24, 8).count(), 25);
    EXPECT_EQ(PatchGrid::make(64, 64, 16, 4).count(), 25);
    EXPECT_EQ(PatchGrid::make(16, 16, 16, 0).count(), 1);
}

TEST(PatchGrid, RejectsBadGeometry) {
    EXPECT_THROW(PatchGrid::make(65, 64, 16, 4), GeometryError);
    EXPECT_THROW(PatchGrid::make(8, 8, 16, 4), GeometryError);
    EXPECT_THROW(PatchGrid::make(64, 64, 16, 16), GeometryError);
    EXPECT_THROW(PatchGrid::make(64, 64, 16, -1), GeometryError);
    try {
        PatchGrid::make(70, 70, 16, 4);
        FAIL();
    } catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("64x64"), std::string::npos) << e.what();
    }
}

TEST(Decompose, CopiesWindows) {
    std::mt19937_64 rng(1);
    ImageBuffer img = random_image(38, 26, rng);
    PatchSet ps = decompose(img, 8, 2);
    ASSERT_EQ(ps.count(), static_cast<std::size_t>(6 * 4));
    const int s = 6;
    for (int r = 0; r < ps.grid.rows(); ++r)
        for (int c = 0; c < ps.grid.cols(); ++c) {
            auto p = ps.patch(static_cast<std::size_t>(r * ps.grid.cols() + c));
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    for (int ch = 0; ch < 3; ++ch)
                        ASSERT_EQ(p[(i * 8 + j) * 3 + ch], img.at(r * s + i, c * s + j, ch));
        }

    ImageBuffer single = random_image(16, 16, rng);
    PatchSet one = decompose(single, 16, 0);
    ASSERT_EQ(one.count(), 1u);
    EXPECT_TRUE(std::equal(one.data.begin(), one.data.end(), single.values().begin()));
}

TEST(BlendWeight, Examples) {
    EXPECT_NEAR(blend_weight(0, 0, 16), (1.0 / 8.5) * (1.0 / 8.5), 1e-15);
    EXPECT_NEAR(blend_weight(0, 0, 16), 0.013841, 1e-6);
    for (int d : {4, 5, 8, 16, 24}) {
        double best = 0.0;
        int bi = -1, bj = -1;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const double w = blend_weight(i, j, d);
                EXPECT_GT(w, 0.0);
                EXPECT_DOUBLE_EQ(w, blend_weight(d - 1 - i, d - 1 - j, d));
                if (w > best) best = w, bi = i, bj = j;
            }
        EXPECT_EQ(bi, (d - 1) / 2);
        EXPECT_EQ(bj, (d - 1) / 2);
    }
}

TEST(Assemble, RoundTrip) {
    std::mt19937_64 rng(2);
    for (int d : {8, 16, 24}) {
        for (int ov : {0, d / 4, d / 2 - 1}) {
            const int s = d - ov;
            const int h = d + 3 * s, w = d + 2 * s;
            ImageBuffer img = random_image(h, w, rng);
            EXPECT_LE(max_abs_diff(assemble(decompose(img, d, ov)), img), 1e-6) << d << " " << ov;
        }
    }
}

TEST(Assemble, NonOverlapIsConcatenation) {
    std::mt19937_64 rng(3);
    ImageBuffer img = random_image(32, 32, rng);
    PatchSet ps = decompose(img, 16, 0);
    for (double& v : ps.data) v = v * 0.5 + 0.1;
    ImageBuffer out = assemble(ps);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.values()[i], img.values()[i] * 0.5 + 0.1, 1e-15);
}

TEST(Assemble, WeightsSumToOne) {
    // Feeding all-ones patches yields sum(w * 1) / sum(w) at each pixel.
    ImageBuffer ones(64, 64, ColorSpace::RGB, 1.0);
    PatchSet ps = decompose(ones, 16, 4);
    ImageBuffer out = assemble(ps);
    for (double v : out.values()) EXPECT_NEAR(v, 1.0, 1e-15);

    // Independent oracle: weighted mean of distinct per-patch constants at one pixel.
    PatchSet q = decompose(ones, 16, 4);
    for (std::size_t k = 0; k < q.count(); ++k)
        for (double& v : q.patch(k)) v = static_cast<double>(k);
    ImageBuffer mixed = assemble(q);
    const int y = 13, x = 14;  // covered by patches (0,0),(0,1),(1,0),(1,1)
    double num = 0, den = 0;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const double w = blend_weight(y - 12 * r, x - 12 * c, 16);
            num += w * (r * 5 + c);
            den += w;
        }
    EXPECT_NEAR(mixed.at(y, x, 0), num / den, 1e-12);
}

TEST(Assemble, PermutationSensitive) {
    std::mt19937_64 rng(4);
    ImageBuffer img = random_image(40, 40, rng);
    PatchSet ps = decompose(img, 16, 4);
    PatchSet shuffled = ps;
    std::swap_ranges(shuffled.patch(0).begin(), shuffled.patch(0).end(), shuffled.patch(5).begin());
    EXPECT_GT(max_abs_diff(assemble(shuffled), assemble(ps)), 1e-3);

    ImageBuffer flat(40, 40, ColorSpace::RGB, 0.3);
    PatchSet fp = decompose(flat, 16, 4);
    PatchSet fs = fp;
    std::swap_ranges(fs.patch(0).begin(), fs.patch(0).end(), fs.patch(5).begin());
    EXPECT_EQ(assemble(fs), assemble(fp));
}

TEST(Assemble, RejectsInconsistentPatchCount) {
    ImageBuffer img(32, 32);
    PatchSet ps = decompose(img, 16, 0);
    ps.data.resize(ps.data.size() - ps.patch_size());
    EXPECT_THROW(assemble(ps), ShapeError);
}

TEST(Assemble, KeepsColorSpaceTag) {
    ImageBuffer img(16, 16, ColorSpace::YUV);
    EXPECT_EQ(assemble(decompose(img, 8, 0)).space(), ColorSpace::YUV);
}

TEST(Deblock, DefaultIsIdentityAndHookKeepsShape) {
    std::mt19937_64 rng(5);
    ImageBuffer img = random_image(16, 16, rng);
    EXPECT_EQ(deblock_hook(img), img);
    DeblockFilter halve = [](const ImageBuffer& x) {
        ImageBuffer y = x;
        for (double& v : y.values()) v *= 0.5;
        return y;
    };
    ImageBuffer out = deblock_hook(img, halve);
    EXPECT_TRUE(out.same_shape(img));
    DeblockFilter crop = [](const ImageBuffer& x) { return center_crop(x, 8, 8); };
    EXPECT_THROW(deblock_hook(img, crop), ShapeError);
}
