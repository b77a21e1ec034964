#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "radtk/errors.hpp"
#include "radtk/image.hpp"

namespace radtk {

// Affine intensity adjustment: round(alpha*p + beta) saturated to [0,255].
inline GrayImage adjust_brightness(const GrayImage& img, double alpha = 1.5, double beta = 15.0) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::floor(alpha * img.pixels[i] + beta + 0.5);
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return out;
}

// k x k median with replicate border padding.
inline GrayImage median_filter(const GrayImage& img, int k = 3) {
    if (k < 1 || k % 2 == 0) throw ParamError("median kernel size must be odd, got " + std::to_string(k));
    const int r = k / 2;
    GrayImage out(img.width, img.height);
    std::vector<std::uint8_t> window(static_cast<std::size_t>(k) * k);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            std::size_t n = 0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = std::clamp(y + dy, 0, img.height - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = std::clamp(x + dx, 0, img.width - 1);
                    window[n++] = img.at(xx, yy);
                }
            }
            auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
            std::nth_element(window.begin(), mid, window.begin() + static_cast<std::ptrdiff_t>(n));
            out.at(x, y) = *mid;
        }
    return out;
}

namespace detail {

// Per-tile clipped-histogram equalization mapping. The clip threshold is
// max(1, clip_limit*npix/256) in real arithmetic and the clipped mass is
// redistributed uniformly (excess/256 per bin, also in reals); the mapping is
// round(cdf*255/npix), monotone by construction. Keeping the threshold and
// the redistribution unrounded makes the mapping of a single occupied bin
// independent of the tile's pixel count, so a constant image stays constant
// even when the last grid tiles are clipped short.
inline std::array<std::uint8_t, 256> clahe_tile_mapping(const GrayImage& img, int x0, int x1, int y0,
                                                        int y1, double clip_limit) {
    std::array<double, 256> hist{};
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;
    const double npix = static_cast<double>(x1 - x0) * (y1 - y0);
    const double clip = std::max(1.0, clip_limit * npix / 256.0);
    double excess = 0.0;
    for (auto& h : hist)
        if (h > clip) {
            excess += h - clip;
            h = clip;
        }
    const double per_bin = excess / 256.0;
    for (auto& h : hist) h += per_bin;
    std::array<std::uint8_t, 256> mapping{};
    double cdf = 0.0;
    for (int b = 0; b < 256; ++b) {
        cdf += hist[b];
        mapping[b] = static_cast<std::uint8_t>(
            std::clamp<long>(std::lround(cdf * 255.0 / npix), 0, 255));
    }
    return mapping;
}

// Finds the interpolation bracket of coordinate v among tile centers:
// lo/hi tile indices plus the fractional weight toward hi. Pixels outside the
// first/last center clamp to the nearest mapping.
inline void clahe_bracket(double v, const std::vector<double>& centers, int& lo, int& hi, double& frac) {
    const int t = static_cast<int>(centers.size());
    if (v <= centers.front()) {
        lo = hi = 0;
        frac = 0.0;
        return;
    }
    if (v >= centers.back()) {
        lo = hi = t - 1;
        frac = 0.0;
        return;
    }
    lo = 0;
    while (lo + 1 < t && centers[lo + 1] <= v) ++lo;
    hi = lo + 1;
    frac = (v - centers[lo]) / (centers[hi] - centers[lo]);
}

}  // namespace detail

// Contrast-limited adaptive histogram equalization over a tiles x tiles grid
// (tile extents ceil(H/tiles) x ceil(W/tiles), last tiles clipped to the
// image), bilinearly blending the four nearest tile mappings per pixel.
inline GrayImage clahe(const GrayImage& img, double clip_limit = 2.0, int tiles = 3) {
    if (tiles < 1) throw ParamError("tile grid must be >= 1");
    if (img.width < tiles || img.height < tiles)
        throw ParamError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " smaller than the " + std::to_string(tiles) + "x" + std::to_string(tiles) +
                         " tile grid");
    const int tile_w = (img.width + tiles - 1) / tiles;
    const int tile_h = (img.height + tiles - 1) / tiles;

    std::vector<std::array<std::uint8_t, 256>> maps(static_cast<std::size_t>(tiles) * tiles);
    std::vector<double> cx(static_cast<std::size_t>(tiles)), cy(static_cast<std::size_t>(tiles));
    for (int ty = 0; ty < tiles; ++ty) {
        const int y0 = ty * tile_h;
        const int y1 = std::min(img.height, y0 + tile_h);
        cy[static_cast<std::size_t>(ty)] = (y0 + y1 - 1) / 2.0;
        for (int tx = 0; tx < tiles; ++tx) {
            const int x0 = tx * tile_w;
            const int x1 = std::min(img.width, x0 + tile_w);
            if (ty == 0) cx[static_cast<std::size_t>(tx)] = (x0 + x1 - 1) / 2.0;
            maps[static_cast<std::size_t>(ty) * tiles + tx] =
                detail::clahe_tile_mapping(img, x0, x1, y0, y1, clip_limit);
        }
    }

    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        int ty0, ty1;
        double fy;
        detail::clahe_bracket(static_cast<double>(y), cy, ty0, ty1, fy);
        for (int x = 0; x < img.width; ++x) {
            int tx0, tx1;
            double fx;
            detail::clahe_bracket(static_cast<double>(x), cx, tx0, tx1, fx);
            const std::uint8_t p = img.at(x, y);
            const double m00 = maps[static_cast<std::size_t>(ty0) * tiles + tx0][p];
            const double m01 = maps[static_cast<std::size_t>(ty0) * tiles + tx1][p];
            const double m10 = maps[static_cast<std::size_t>(ty1) * tiles + tx0][p];
            const double m11 = maps[static_cast<std::size_t>(ty1) * tiles + tx1][p];
            const double v = (1.0 - fy) * ((1.0 - fx) * m00 + fx * m01) +
                             fy * ((1.0 - fx) * m10 + fx * m11);
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
        }
    }
    return out;
}

// (p - min)/(max - min); a flat image maps to all zeros so the pipeline stays
// total.
inline GrayImageF normalize_minmax(const GrayImage& img) {
    GrayImageF out(img.width, img.height);
    std::uint8_t lo = 255, hi = 0;
    for (std::uint8_t p : img.pixels) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    if (hi == lo) return out;
    const float scale = 1.0f / static_cast<float>(hi - lo);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        out.pixels[i] = static_cast<float>(img.pixels[i] - lo) * scale;
    return out;
}

// Zeroes everything outside the (clamped) box; the full frame is retained.
inline GrayImageF apply_mask(const GrayImageF& img, BBox box) {
    clamp_box(box, img.width, img.height);
    if (box.w <= 0 || box.h <= 0) throw ParamError("mask box has zero area after clamping");
    GrayImageF out(img.width, img.height);
    for (int y = box.y; y < box.y + box.h; ++y)
        for (int x = box.x; x < box.x + box.w; ++x) out.at(x, y) = img.at(x, y);
    return out;
}

// Nearest-neighbor resampling: source index = floor(target * src / out).
template <typename P>
Image<P> resize_nearest(const Image<P>& img, int out_h = 224, int out_w = 224) {
    Image<P> out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const int sy = static_cast<int>(static_cast<std::int64_t>(y) * img.height / out_h);
        for (int x = 0; x < out_w; ++x) {
            const int sx = static_cast<int>(static_cast<std::int64_t>(x) * img.width / out_w);
            out.at(x, y) = img.at(sx, sy);
        }
    }
    return out;
}

// The full six-stage pipeline in fixed order: brightness -> median denoise ->
// local contrast -> min-max normalization -> box mask -> nearest resize.
inline GrayImageF run_pipeline(const GrayImage& img, const BBox& box, int out_size = 224) {
    const GrayImage bright = adjust_brightness(img);
    const GrayImage denoised = median_filter(bright);
    const GrayImage contrasted = clahe(denoised);
    const GrayImageF normalized = normalize_minmax(contrasted);
    const GrayImageF masked = apply_mask(normalized, box);
    return resize_nearest(masked, out_size, out_size);
}

}  // namespace radtk
