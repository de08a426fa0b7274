#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rse/error.hpp"
#include "rse/image.hpp"
#include "rse/png_io.hpp"

namespace rse {

/// Noise level whose 10*log10(1/sigma^2) lands near 16.6 dB.
inline constexpr double kCalibratedSigma = 0.147;

/// clip(img + N(0, sigma^2)) drawn per channel-pixel in HWC order.
inline ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed) {
    if (img.space() != ColorSpace::RGB) throw InvalidArgument("noise is applied in RGB space");
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
    ImageBuffer out = img;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    for (double& v : out.values()) {
        const double n = v + normal(rng);
        v = n < 0.0 ? 0.0 : (n > 1.0 ? 1.0 : n);
    }
    return out;
}

/// Seed for the image at position `index` of a dataset.
inline std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

inline std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

/// One (noisy, clean) pair per PNG in `clean_dir`, in lexicographic filename order.
inline std::vector<ImagePair> build_pair_dataset(const std::filesystem::path& clean_dir, double sigma,
                                                 std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
    const auto files = list_pngs(clean_dir);
    if (files.empty()) throw FormatError("no .png files in " + clean_dir.string());
    std::vector<ImagePair> pairs;
    pairs.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        ImageBuffer clean = load_image(files[i]);
        ImageBuffer noisy = add_gaussian_noise(clean, sigma, image_seed(seed, i));
        pairs.push_back({std::move(noisy), std::move(clean), files[i].stem().string()});
    }
    return pairs;
}

/// Writes {out}/clean/{id}.png, {out}/noisy/{id}.png and manifest.json.
inline void write_pair_dataset(const std::filesystem::path& out, const std::vector<ImagePair>& pairs, double sigma,
                               std::uint64_t seed) {
    std::filesystem::create_directories(out / "clean");
    std::filesystem::create_directories(out / "noisy");
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& p : pairs) {
        save_image(p.clean, out / "clean" / (p.id + ".png"));
        save_image(p.noisy, out / "noisy" / (p.id + ".png"));
        ids.push_back(p.id);
    }
    nlohmann::json manifest{{"ids", ids}, {"sigma", sigma}, {"seed", seed}, {"count", pairs.size()}};
    std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
}

/// Reads a directory produced by write_pair_dataset.
inline std::vector<ImagePair> load_pair_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw FormatError("missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        std::ifstream(manifest_path) >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    std::vector<ImagePair> pairs;
    for (const auto& id_json : manifest.at("ids")) {
        const auto id = id_json.get<std::string>();
        ImagePair p{load_image(dir / "noisy" / (id + ".png")), load_image(dir / "clean" / (id + ".png")), id};
        if (!p.noisy.same_shape(p.clean)) throw FormatError("noisy/clean size mismatch for " + id);
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw FormatError("empty dataset in " + dir.string());
    return pairs;
}

// Synthetic scenes ----------------------------------------------------------

/// A smooth piecewise scene: a shaded background with soft-edged ellipses and
/// rectangles. Color varies mostly in luminance with mild tints, and values
/// stay inside [0.12, 0.88] so additive noise is rarely clipped.
inline ImageBuffer make_synthetic_scene(int height, int width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

    struct Shape {
        bool ellipse;
        double cy, cx, ry, rx, angle, level;
        std::array<double, 3> tint;
    };

    const double base = uni(0.3, 0.7);
    const double gy = uni(-0.2, 0.2), gx = uni(-0.2, 0.2);
    const std::array<double, 3> base_tint{uni(0.9, 1.1), uni(0.9, 1.1), uni(0.9, 1.1)};
    const int n_shapes = 2 + static_cast<int>(u01(rng) * 4.0);
    std::vector<Shape> shapes;
    for (int i = 0; i < n_shapes; ++i) {
        Shape s;
        s.ellipse = u01(rng) < 0.6;
        s.cy = uni(0.0, height);
        s.cx = uni(0.0, width);
        s.ry = uni(0.1, 0.35) * height;
        s.rx = uni(0.1, 0.35) * width;
        s.angle = uni(0.0, 3.14159265358979);
        s.level = uni(0.2, 0.8);
        s.tint = {uni(0.88, 1.12), uni(0.88, 1.12), uni(0.88, 1.12)};
        shapes.push_back(s);
    }

    auto smoothstep = [](double e) {
        const double t = std::clamp(e, 0.0, 1.0);
        return t * t * (3.0 - 2.0 * t);
    };

    ImageBuffer img(height, width, ColorSpace::RGB);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double fy = static_cast<double>(y) / height - 0.5;
            const double fx = static_cast<double>(x) / width - 0.5;
            double lum = base + gy * fy + gx * fx;
            std::array<double, 3> tint = base_tint;
            for (const auto& s : shapes) {
                const double dy = y - s.cy, dx = x - s.cx;
                const double ca = std::cos(s.angle), sa = std::sin(s.angle);
                const double ly = (ca * dy - sa * dx) / s.ry;
                const double lx = (sa * dy + ca * dx) / s.rx;
                // Signed distance-like measure in pixels (negative inside).
                double d = 0.0;
                if (s.ellipse)
                    d = (std::sqrt(ly * ly + lx * lx) - 1.0) * std::min(s.ry, s.rx);
                else
                    d = (std::max(std::abs(ly), std::abs(lx)) - 1.0) * std::min(s.ry, s.rx);
                const double inside = 1.0 - smoothstep((d + 1.0) / 2.0);
                lum = (1.0 - inside) * lum + inside * s.level;
                for (int c = 0; c < 3; ++c) tint[c] = (1.0 - inside) * tint[c] + inside * s.tint[c];
            }
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(lum * tint[c], 0.12, 0.88);
        }
    }
    return img;
}

/// Writes `count` synthetic scenes as scene_0000.png, ... into `dir`.
inline void write_synthetic_fixture(const std::filesystem::path& dir, int count, int size, std::uint64_t seed) {
    if (count <= 0 || size <= 0) throw InvalidArgument("fixture count and size must be positive");
    std::filesystem::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04d.png", i);
        save_image(make_synthetic_scene(size, size, image_seed(seed, static_cast<std::uint64_t>(i))), dir / name);
    }
}

} // namespace rse
