#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rse/error.hpp"
#include "rse/image.hpp"

namespace rse {

/// Geometry of an overlapping D x D patch grid over an image.
struct PatchGrid {
    int patch = 0;   // D
    int overlap = 0;
    int src_h = 0;
    int src_w = 0;

    int stride() const { return patch - overlap; }
    int rows() const { return (src_h - patch) / stride() + 1; }
    int cols() const { return (src_w - patch) / stride() + 1; }
    int count() const { return rows() * cols(); }

    /// Largest height/width <= `extent` that the grid tiles exactly.
    int largest_valid(int extent) const {
        if (extent < patch) return 0;
        return patch + ((extent - patch) / stride()) * stride();
    }

    /// Throws GeometryError when the grid does not tile the source exactly.
    void validate() const {
        if (patch <= 0) throw GeometryError("patch size must be positive");
        if (overlap < 0 || overlap >= patch)
            throw GeometryError("overlap must satisfy 0 <= overlap < patch size");
        if (src_h < patch || src_w < patch)
            throw GeometryError("image " + std::to_string(src_h) + "x" + std::to_string(src_w) +
                                " is smaller than patch size " + std::to_string(patch));
        if ((src_h - patch) % stride() != 0 || (src_w - patch) % stride() != 0)
            throw GeometryError("image " + std::to_string(src_h) + "x" + std::to_string(src_w) +
                                " is not tiled by D=" + std::to_string(patch) +
                                " overlap=" + std::to_string(overlap) + "; largest valid crop is " +
                                std::to_string(largest_valid(src_h)) + "x" + std::to_string(largest_valid(src_w)));
    }

    static PatchGrid make(int src_h, int src_w, int patch, int overlap) {
        PatchGrid g{patch, overlap, src_h, src_w};
        g.validate();
        return g;
    }

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Patches in row-major grid order, each D x D x 3 in HWC layout, stored contiguously
/// so the whole set is a (count, D, D, 3) batch.
struct PatchSet {
    PatchGrid grid;
    ColorSpace space = ColorSpace::RGB;
    std::vector<double> data;

    std::size_t patch_size() const { return static_cast<std::size_t>(grid.patch) * grid.patch * 3; }
    std::size_t count() const { return patch_size() == 0 ? 0 : data.size() / patch_size(); }

    std::span<double> patch(std::size_t i) { return {data.data() + i * patch_size(), patch_size()}; }
    std::span<const double> patch(std::size_t i) const { return {data.data() + i * patch_size(), patch_size()}; }
};

inline PatchSet decompose(const ImageBuffer& img, int patch, int overlap) {
    const PatchGrid grid = PatchGrid::make(img.height(), img.width(), patch, overlap);
    PatchSet ps{grid, img.space(), {}};
    ps.data.resize(static_cast<std::size_t>(grid.count()) * ps.patch_size());
    const int s = grid.stride();
    std::size_t k = 0;
    for (int r = 0; r < grid.rows(); ++r)
        for (int c = 0; c < grid.cols(); ++c)
            for (int i = 0; i < patch; ++i)
                for (int j = 0; j < patch; ++j)
                    for (int ch = 0; ch < 3; ++ch) ps.data[k++] = img.at(r * s + i, c * s + j, ch);
    return ps;
}

/// Separable tent weight, strictly positive: 1 - |i - c| / (c + 1) per axis with c = (D - 1) / 2.
inline double blend_weight(int i, int j, int patch) {
    const double c = (patch - 1) / 2.0;
    return (1.0 - std::abs(i - c) / (c + 1.0)) * (1.0 - std::abs(j - c) / (c + 1.0));
}

/// Distance-weighted average of all patches covering each pixel.
/// Accumulation runs in patch order, so the result is reproducible bit for bit.
inline ImageBuffer assemble(const PatchSet& ps) {
    const PatchGrid& g = ps.grid;
    g.validate();
    if (ps.count() != static_cast<std::size_t>(g.count()) || ps.data.size() != g.count() * ps.patch_size())
        throw ShapeError("patch set holds " + std::to_string(ps.count()) + " patches, grid expects " +
                         std::to_string(g.count()));

    const int d = g.patch;
    std::vector<double> wtab(static_cast<std::size_t>(d) * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) wtab[static_cast<std::size_t>(i) * d + j] = blend_weight(i, j, d);

    ImageBuffer acc(g.src_h, g.src_w, ps.space, 0.0);
    std::vector<double> wsum(static_cast<std::size_t>(g.src_h) * g.src_w, 0.0);
    const int s = g.stride();
    std::size_t k = 0;
    for (int r = 0; r < g.rows(); ++r) {
        for (int c = 0; c < g.cols(); ++c) {
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    const double w = wtab[static_cast<std::size_t>(i) * d + j];
                    const int y = r * s + i, x = c * s + j;
                    wsum[static_cast<std::size_t>(y) * g.src_w + x] += w;
                    for (int ch = 0; ch < 3; ++ch) acc.at(y, x, ch) += w * ps.data[k++];
                }
            }
        }
    }
    for (int y = 0; y < g.src_h; ++y) {
        for (int x = 0; x < g.src_w; ++x) {
            const double w = wsum[static_cast<std::size_t>(y) * g.src_w + x];
            if (!(w > 0.0)) throw Error("pixel not covered by any patch");
            for (int ch = 0; ch < 3; ++ch) acc.at(y, x, ch) /= w;
        }
    }
    return acc;
}

/// Optional post-assembly deblocking filter. An empty function means pass-through.
using DeblockFilter = std::function<ImageBuffer(const ImageBuffer&)>;

inline ImageBuffer deblock_hook(const ImageBuffer& img, const DeblockFilter& filter = {}) {
    if (!filter) return img;
    ImageBuffer out = filter(img);
    if (!out.same_shape(img)) throw ShapeError("deblocking filter changed image dimensions");
    return out;
}

} // namespace rse
