#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <png.h>

#include "rse/error.hpp"
#include "rse/image.hpp"

namespace rse {

/// Loads an 8-bit RGB PNG. Values are byte / 255.0.
inline ImageBuffer load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FormatError("image not found: " + path.string());

    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw FormatError("cannot read PNG " + path.string() + ": " + img.message);

    // Reject palette, gray, alpha and 16-bit sources instead of converting them silently.
    if (img.format != PNG_FORMAT_RGB) {
        png_image_free(&img);
        throw FormatError("expected 8-bit RGB PNG without alpha: " + path.string());
    }

    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr))
        throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);

    ImageBuffer out(static_cast<int>(img.height), static_cast<int>(img.width), ColorSpace::RGB);
    auto v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = bytes[i] / 255.0;
    return out;
}

inline std::uint8_t to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

/// Writes an RGB image as 8-bit PNG, clamping to [0, 1].
inline void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
    if (image.space() != ColorSpace::RGB) throw InvalidArgument("save_image expects an RGB image");
    std::vector<std::uint8_t> bytes(image.size());
    auto v = image.values();
    for (std::size_t i = 0; i < v.size(); ++i) bytes[i] = to_byte(v[i]);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw FormatError("cannot write PNG " + path.string() + ": " + img.message);
}

} // namespace rse
