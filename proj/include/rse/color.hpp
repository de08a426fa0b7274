#pragma once

#include <array>

#include <Eigen/Dense>

#include "rse/error.hpp"
#include "rse/image.hpp"

namespace rse {

/// RGB -> YUV matrix and its numerically computed inverse.
///
/// The V row is (0.615, -0.515, -1.000), which is not the BT.601 V row.
struct ColorMatrix {
    Eigen::Matrix3d forward;
    Eigen::Matrix3d inverse;

    static ColorMatrix make() {
        ColorMatrix m;
        m.forward << 0.299, 0.587, 0.114,
                    -0.147, -0.289, 0.436,
                     0.615, -0.515, -1.000;
        const double det = m.forward.determinant();
        if (det == 0.0) throw Error("RGB-YUV matrix is singular");
        m.inverse = m.forward.inverse();
        return m;
    }
};

inline const ColorMatrix& color_matrix() {
    static const ColorMatrix m = ColorMatrix::make();
    return m;
}

namespace detail {
inline ImageBuffer apply_matrix(const ImageBuffer& img, const Eigen::Matrix3d& m, ColorSpace out_space) {
    ImageBuffer out(img.height(), img.width(), out_space);
    auto src = img.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); i += 3) {
        for (int r = 0; r < 3; ++r)
            dst[i + r] = m(r, 0) * src[i] + m(r, 1) * src[i + 1] + m(r, 2) * src[i + 2];
    }
    return out;
}
} // namespace detail

/// No clipping; U and V are signed.
inline ImageBuffer rgb_to_yuv(const ImageBuffer& img) {
    if (img.space() != ColorSpace::RGB) throw InvalidArgument("rgb_to_yuv expects an RGB image");
    return detail::apply_matrix(img, color_matrix().forward, ColorSpace::YUV);
}

/// Unclipped inverse transform. Callers clip with clip01() when emitting final images.
inline ImageBuffer yuv_to_rgb(const ImageBuffer& img) {
    if (img.space() != ColorSpace::YUV) throw InvalidArgument("yuv_to_rgb expects a YUV image");
    return detail::apply_matrix(img, color_matrix().inverse, ColorSpace::RGB);
}

inline std::array<double, 3> rgb_to_yuv(const std::array<double, 3>& rgb) {
    const auto& m = color_matrix().forward;
    std::array<double, 3> out{};
    for (int r = 0; r < 3; ++r) out[r] = m(r, 0) * rgb[0] + m(r, 1) * rgb[1] + m(r, 2) * rgb[2];
    return out;
}

inline std::array<double, 3> yuv_to_rgb(const std::array<double, 3>& yuv) {
    const auto& m = color_matrix().inverse;
    std::array<double, 3> out{};
    for (int r = 0; r < 3; ++r) out[r] = m(r, 0) * yuv[0] + m(r, 1) * yuv[1] + m(r, 2) * yuv[2];
    return out;
}

} // namespace rse
