#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "rse/metrics.hpp"

using namespace rse;

namespace {

ImageBuffer random_image(int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    ImageBuffer img(h, w);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : img.values()) v = u(rng);
    return img;
}

ImageBuffer checkerboard(int n, double lo, double hi) {
    ImageBuffer img(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = (x + y) % 2 == 0 ? hi : lo;
    return img;
}

} // namespace

TEST(Psnr, Examples) {
    std::mt19937_64 rng(1);
    ImageBuffer a = random_image(8, 8, rng, 0.0, 0.5);
    EXPECT_EQ(psnr(a, a), kInfinitePsnr);

    ImageBuffer z(8, 8, ColorSpace::RGB, 0.0), b(8, 8, ColorSpace::RGB, 16.0 / 255.0);
    EXPECT_NEAR(psnr(z, b), 10.0 * std::log10(255.0 * 255.0 / 256.0), 1e-9);
    EXPECT_NEAR(psnr(z, b), 24.048, 1e-3);
    ImageBuffer shifted = a;
    for (double& v : shifted.values()) v += 16.0 / 255.0;
    EXPECT_NEAR(psnr(a, shifted), psnr(z, b), 1e-9);

    ImageBuffer zero(4, 4, ColorSpace::RGB, 0.0), one(4, 4, ColorSpace::RGB, 1.0);
    EXPECT_NEAR(psnr(zero, one), 0.0, 1e-12);
    EXPECT_THROW(psnr(zero, ImageBuffer(4, 5)), ShapeError);
}

TEST(Psnr, SymmetricAndMonotoneInResidualScale) {
    std::mt19937_64 rng(2);
    ImageBuffer a = random_image(16, 16, rng, 0.3, 0.7);
    ImageBuffer r = random_image(16, 16, rng, -0.05, 0.05);
    auto with_residual = [&](double t) {
        ImageBuffer b = a;
        for (std::size_t i = 0; i < b.size(); ++i) b.values()[i] += t * r.values()[i];
        return b;
    };
    EXPECT_EQ(psnr(a, with_residual(1.0)), psnr(with_residual(1.0), a));
    double prev = psnr(a, with_residual(1.0));
    for (double t : {1.5, 2.0, 3.0, 5.0}) {
        const double p = psnr(a, with_residual(t));
        EXPECT_LT(p, prev);
        prev = p;
    }
}

TEST(Ssim, Examples) {
    std::mt19937_64 rng(3);
    ImageBuffer a = random_image(24, 24, rng);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);

    ImageBuffer bin = checkerboard(24, 0.0, 1.0);
    ImageBuffer inv = checkerboard(24, 1.0, 0.0);
    EXPECT_LT(ssim(bin, inv), 0.0);

    // Constant images: only the luminance factor survives.
    const double la = 0.4, lb = 0.6;
    ImageBuffer ca(16, 16, ColorSpace::RGB, la), cb(16, 16, ColorSpace::RGB, lb);
    const double ya = 0.299 * la + 0.587 * la + 0.114 * la, yb = 0.299 * lb + 0.587 * lb + 0.114 * lb;
    const double c1 = 1e-4;
    const double expected = (2 * ya * yb + c1) / (ya * ya + yb * yb + c1);
    EXPECT_NEAR(ssim(ca, cb), expected, 1e-9);
    EXPECT_LT(ssim(ca, cb), 1.0);

    ImageBuffer b = random_image(24, 24, rng);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_THROW(ssim(ImageBuffer(10, 10), ImageBuffer(10, 10)), ShapeError);
}

TEST(Uqi, Examples) {
    std::mt19937_64 rng(4);
    ImageBuffer a = random_image(12, 12, rng, 0.2, 0.8);
    EXPECT_NEAR(uqi(a, a), 1.0, 1e-12);

    ImageBuffer shifted = a;
    for (double& v : shifted.values()) v += 0.1;
    EXPECT_LT(uqi(a, shifted), 1.0);

    // Anticorrelated with equal means: correlation factor -1, the other two factors 1.
    ImageBuffer p = checkerboard(12, 0.25, 0.75);
    ImageBuffer q = checkerboard(12, 0.75, 0.25);
    EXPECT_NEAR(uqi(p, q), -1.0, 1e-12);

    ImageBuffer b = random_image(12, 12, rng);
    EXPECT_NEAR(uqi(a, b), uqi(b, a), 1e-12);
}

TEST(Uqi, DegenerateWindows) {
    ImageBuffer flat(8, 8, ColorSpace::RGB, 0.5);
    UqiResult same = uqi_detailed(flat, flat);
    EXPECT_EQ(same.value, 1.0);
    EXPECT_EQ(same.windows, 3);
    EXPECT_EQ(same.skipped, 0);

    ImageBuffer zero(8, 8, ColorSpace::RGB, 0.0);
    UqiResult r = uqi_detailed(zero, flat);  // both variances vanish
    EXPECT_EQ(r.windows, 0);
    EXPECT_EQ(r.skipped, 3);
    EXPECT_THROW(uqi(ImageBuffer(7, 7), ImageBuffer(7, 7)), ShapeError);
}

TEST(Pca, PlanarCloudIsFullyExplained) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    const int d = 6;
    Eigen::MatrixXd basis = Eigen::MatrixXd::NullaryExpr(d, 2, [&] { return nd(rng); });
    Eigen::VectorXd offset = Eigen::VectorXd::NullaryExpr(d, [&] { return nd(rng); });
    Eigen::MatrixXd x(200, d);
    for (int i = 0; i < 200; ++i) x.row(i) = (basis * Eigen::Vector2d(nd(rng), 3 * nd(rng)) + offset).transpose();
    PcaResult r = pca_project(x);
    EXPECT_NEAR(r.explained.sum(), r.total_variance, 1e-9 * r.total_variance);
    EXPECT_NEAR((r.components.transpose() * r.components - Eigen::Matrix2d::Identity()).norm(), 0.0, 1e-12);
    // the mean point projects to the origin
    Eigen::RowVectorXd proj = (x.colwise().mean() - r.mean.transpose()) * r.components;
    EXPECT_NEAR(proj.norm(), 0.0, 1e-12);
    EXPECT_NEAR(r.projection.colwise().mean().norm(), 0.0, 1e-12);
    for (int k = 0; k < 2; ++k) {
        Eigen::Index arg;
        r.components.col(k).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(r.components(arg, k), 0.0);
    }
}

TEST(Pca, IsotropicCloud) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(10000, 72, [&] { return nd(rng); });
    auto ratio = pca_project(x).explained_ratio();
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(ratio(k), 1.0 / 72.0, 0.3 / 72.0);
}

TEST(Pca, RotationInvariance) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    const int d = 5;
    Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(300, d, [&] { return nd(rng); });
    x.col(0) *= 4.0;
    x.col(3) *= 2.0;
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::NullaryExpr(d, d, [&] { return nd(rng); }))
                            .householderQ();
    auto a = pca_project(x), b = pca_project(Eigen::MatrixXd(x * q));
    EXPECT_NEAR(a.explained(0), b.explained(0), 1e-9);
    EXPECT_NEAR(a.explained(1), b.explained(1), 1e-9);
}

TEST(Pca, Errors) {
    EXPECT_THROW(pca_project(Eigen::MatrixXd::Zero(1, 3)), InvalidArgument);
    EXPECT_THROW(pca_project(std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(3)}), InvalidArgument);
    EXPECT_THROW(pca_project(std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4)}),
                 ShapeError);
}

TEST(MetricsReport, MeansAndFiles) {
    MetricsReport rep;
    rep.rows.push_back({"a", 10, 20, 0.1, 0.5, 0.2, 0.6});
    rep.rows.push_back({"b", 12, 26, 0.3, 0.7, 0.4, 0.8});
    rep.finalize();
    EXPECT_NEAR(rep.mean.psnr_noisy, 11.0, 1e-9);
    EXPECT_NEAR(rep.mean.psnr_denoised, 23.0, 1e-9);
    EXPECT_NEAR(rep.mean.uqi_denoised, 0.7, 1e-9);
    EXPECT_EQ(rep.mean.id, "mean");

    const auto dir = std::filesystem::temp_directory_path() / "rse_test_metrics";
    std::filesystem::create_directories(dir);
    write_metrics_csv(rep, dir / "m.csv");
    std::ifstream is(dir / "m.csv");
    std::string line;
    int lines = 0;
    std::getline(is, line);
    EXPECT_EQ(line, "id,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised,uqi_noisy,uqi_denoised");
    while (std::getline(is, line)) ++lines;
    EXPECT_EQ(lines, 3);

    rep.rows[0].psnr_noisy = kInfinitePsnr;
    write_metrics_json(rep, dir / "m.json");
    nlohmann::json j;
    std::ifstream(dir / "m.json") >> j;
    EXPECT_EQ(j["rows"][0]["psnr_noisy"], "inf");
    EXPECT_EQ(format_metric(kInfinitePsnr), "inf");
    std::filesystem::remove_all(dir);
}
