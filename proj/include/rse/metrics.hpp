#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rse/color.hpp"
#include "rse/error.hpp"
#include "rse/image.hpp"

namespace rse {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

inline void require_same_shape(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b))
        throw ShapeError("image dimensions differ: " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b);
    auto va = a.values();
    auto vb = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = va[i] - vb[i];
        s += d * d;
    }
    return s / static_cast<double>(va.size());
}

/// 10 log10(1 / MSE) for [0, 1] images; +infinity for identical images.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    const double m = mse(a, b);
    if (m == 0.0) return kInfinitePsnr;
    return 10.0 * std::log10(1.0 / m);
}

namespace detail {

inline std::vector<double> luma(const ImageBuffer& img) {
    const ImageBuffer y = img.space() == ColorSpace::YUV ? img : rgb_to_yuv(img);
    std::vector<double> out(static_cast<std::size_t>(img.height()) * img.width());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) out[static_cast<std::size_t>(r) * img.width() + c] = y.at(r, c, 0);
    return out;
}

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(i) * size + j] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace detail

/// SSIM on luma with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, averaged over all fully contained windows.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b);
    constexpr int win = 11;
    if (a.height() < win || a.width() < win) throw ShapeError("image smaller than the 11x11 SSIM window");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto w = detail::gaussian_window(win, 1.5);
    const auto ya = detail::luma(a);
    const auto yb = detail::luma(b);
    const int width = a.width();

    double total = 0.0;
    long count = 0;
    for (int r = 0; r + win <= a.height(); ++r) {
        for (int c = 0; c + win <= width; ++c) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double g = w[static_cast<std::size_t>(i) * win + j];
                    const double pa = ya[static_cast<std::size_t>(r + i) * width + c + j];
                    const double pb = yb[static_cast<std::size_t>(r + i) * width + c + j];
                    ma += g * pa;
                    mb += g * pb;
                    saa += g * pa * pa;
                    sbb += g * pb * pb;
                    sab += g * pa * pb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

struct UqiResult {
    double value = 0.0;
    long windows = 0;  // windows that contributed
    long skipped = 0;  // zero-denominator windows where the images differ
};

/// Universal quality index over sliding 8x8 windows (stride 1), per RGB channel.
/// Zero-denominator windows count as 1 where both images agree and are skipped otherwise.
inline UqiResult uqi_detailed(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b);
    constexpr int win = 8;
    if (a.height() < win || a.width() < win) throw ShapeError("image smaller than the 8x8 UQI window");
    constexpr double n = win * win;
    UqiResult res;
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r + win <= a.height(); ++r) {
            for (int c = 0; c + win <= a.width(); ++c) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                bool identical = true;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double pa = a.at(r + i, c + j, ch), pb = b.at(r + i, c + j, ch);
                        sa += pa;
                        sb += pb;
                        saa += pa * pa;
                        sbb += pb * pb;
                        sab += pa * pb;
                        identical = identical && pa == pb;
                    }
                const double ma = sa / n, mb = sb / n;
                const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
                const double den = (va + vb) * (ma * ma + mb * mb);
                if (den == 0.0) {
                    if (identical) {
                        total += 1.0;
                        ++res.windows;
                    } else {
                        ++res.skipped;
                    }
                    continue;
                }
                total += 4.0 * cov * ma * mb / den;
                ++res.windows;
            }
        }
    }
    res.value = res.windows > 0 ? total / static_cast<double>(res.windows) : 1.0;
    return res;
}

inline double uqi(const ImageBuffer& a, const ImageBuffer& b) { return uqi_detailed(a, b).value; }

// PCA -------------------------------------------------------------------------

struct PcaResult {
    Eigen::MatrixXd projection;   // n x 2
    Eigen::Vector2d explained;    // variance along each component
    double total_variance = 0.0;  // trace of the sample covariance
    Eigen::MatrixXd components;   // d x 2, orthonormal columns
    Eigen::VectorXd mean;

    Eigen::Vector2d explained_ratio() const { return explained / total_variance; }
};

/// Projects mean-centred rows onto the top-2 eigenvectors of the sample covariance.
/// Each component is signed so that its largest-magnitude coordinate is positive.
inline PcaResult pca_project(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 2) throw InvalidArgument("PCA needs at least two samples");
    if (samples.cols() < 2) throw InvalidArgument("PCA needs at least two dimensions");
    PcaResult r;
    r.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centred = samples.rowwise() - r.mean.transpose();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(samples.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("PCA eigen-decomposition failed");
    const Eigen::Index d = cov.rows();
    r.components.resize(d, 2);
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        r.components.col(k) = v;
        r.explained(k) = eig.eigenvalues()(d - 1 - k);
    }
    r.total_variance = cov.trace();
    r.projection = centred * r.components;
    return r;
}

inline PcaResult pca_project(const std::vector<Eigen::VectorXd>& vectors) {
    if (vectors.size() < 2) throw InvalidArgument("PCA needs at least two samples");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), vectors.front().size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != m.cols()) throw ShapeError("PCA vectors differ in dimension");
        m.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
    }
    return pca_project(m);
}

// Reports ---------------------------------------------------------------------

struct MetricsRow {
    std::string id;
    double psnr_noisy = 0, psnr_denoised = 0;
    double ssim_noisy = 0, ssim_denoised = 0;
    double uqi_noisy = 0, uqi_denoised = 0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    MetricsRow mean;

    void finalize() {
        mean = MetricsRow{"mean"};
        if (rows.empty()) return;
        for (const auto& r : rows) {
            mean.psnr_noisy += r.psnr_noisy;
            mean.psnr_denoised += r.psnr_denoised;
            mean.ssim_noisy += r.ssim_noisy;
            mean.ssim_denoised += r.ssim_denoised;
            mean.uqi_noisy += r.uqi_noisy;
            mean.uqi_denoised += r.uqi_denoised;
        }
        const double n = static_cast<double>(rows.size());
        mean.psnr_noisy /= n;
        mean.psnr_denoised /= n;
        mean.ssim_noisy /= n;
        mean.ssim_denoised /= n;
        mean.uqi_noisy /= n;
        mean.uqi_denoised /= n;
    }
};

inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Columns: id, psnr_noisy, psnr_denoised, ssim_noisy, ssim_denoised, uqi_noisy, uqi_denoised.
/// One row per image followed by the mean row.
inline void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << "id,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised,uqi_noisy,uqi_denoised\n";
    auto line = [&](const MetricsRow& r) {
        os << r.id << ',' << format_metric(r.psnr_noisy) << ',' << format_metric(r.psnr_denoised) << ','
           << format_metric(r.ssim_noisy) << ',' << format_metric(r.ssim_denoised) << ',' << format_metric(r.uqi_noisy)
           << ',' << format_metric(r.uqi_denoised) << '\n';
    };
    for (const auto& r : report.rows) line(r);
    line(report.mean);
}

inline nlohmann::json metric_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline nlohmann::json to_json(const MetricsRow& r) {
    return {{"id", r.id},
            {"psnr_noisy", metric_json(r.psnr_noisy)},
            {"psnr_denoised", metric_json(r.psnr_denoised)},
            {"ssim_noisy", metric_json(r.ssim_noisy)},
            {"ssim_denoised", metric_json(r.ssim_denoised)},
            {"uqi_noisy", metric_json(r.uqi_noisy)},
            {"uqi_denoised", metric_json(r.uqi_denoised)}};
}

inline void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) rows.push_back(to_json(r));
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << nlohmann::json{{"rows", rows}, {"mean", to_json(report.mean)}}.dump(2) << '\n';
}

} // namespace rse
