#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rse/error.hpp"

namespace rse {

enum class ColorSpace { RGB, YUV };

inline std::string_view to_string(ColorSpace s) { return s == ColorSpace::RGB ? "RGB" : "YUV"; }

/// H x W x 3 image of doubles, interleaved row-major (HWC).
class ImageBuffer {
public:
    static constexpr int channels = 3;

    ImageBuffer() = default;
    ImageBuffer(int height, int width, ColorSpace space = ColorSpace::RGB, double fill = 0.0)
        : height_(height), width_(width), space_(space) {
        if (height <= 0 || width <= 0)
            throw InvalidArgument("image dimensions must be positive");
        values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    ColorSpace space() const { return space_; }
    void set_space(ColorSpace s) { space_ = s; }
    bool empty() const { return values_.empty(); }
    std::size_t size() const { return values_.size(); }

    double& at(int y, int x, int c) { return values_[index(y, x, c)]; }
    double at(int y, int x, int c) const { return values_[index(y, x, c)]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool same_shape(const ImageBuffer& o) const { return height_ == o.height_ && width_ == o.width_; }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels + c;
    }

    int height_ = 0;
    int width_ = 0;
    ColorSpace space_ = ColorSpace::RGB;
    std::vector<double> values_;
};

/// Returns a copy with every value clamped to [0, 1].
inline ImageBuffer clip01(ImageBuffer img) {
    for (double& v : img.values()) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return img;
}

/// Keeps the centered region of the given size.
inline ImageBuffer center_crop(const ImageBuffer& img, int height, int width) {
    if (height > img.height() || width > img.width() || height <= 0 || width <= 0)
        throw GeometryError("center crop larger than image");
    const int y0 = (img.height() - height) / 2;
    const int x0 = (img.width() - width) / 2;
    ImageBuffer out(height, width, img.space());
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

struct ImagePair {
    ImageBuffer noisy;
    ImageBuffer clean;
    std::string id;
};

} // namespace rse
