#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "radtk/errors.hpp"

namespace radtk {

// Row-major single-channel raster. The 8-bit variant carries radiographs as
// ingested; the float variant carries unit-interval values after
// normalization.
template <typename P>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<P> pixels;

    Image() = default;
    Image(int w, int h, P fill = P(0)) : width(w), height(h) {
        if (w <= 0 || h <= 0)
            throw ShapeError("image dimensions must be positive, got " + std::to_string(w) + "x" +
                             std::to_string(h));
        pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
    }

    P& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    P at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

using GrayImage = Image<std::uint8_t>;
using GrayImageF = Image<float>;

// Axis-aligned annotation box, top-left anchored.
struct BBox {
    int x = 0, y = 0, w = 0, h = 0;
};

// Clamps a box into [0,width) x [0,height); reports whether anything moved.
inline bool clamp_box(BBox& box, int width, int height) {
    const BBox orig = box;
    box.x = std::clamp(box.x, 0, width);
    box.y = std::clamp(box.y, 0, height);
    box.w = std::clamp(box.w, 0, width - box.x);
    box.h = std::clamp(box.h, 0, height - box.y);
    return box.x != orig.x || box.y != orig.y || box.w != orig.w || box.h != orig.h;
}

inline std::uint8_t luminance(int r, int g, int b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::min(255.0, std::floor(y + 0.5)));
}

// ---------------------------------------------------------------------------
// Binary PGM (P5).

namespace detail {

inline int pgm_next_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines per the PGM grammar.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw IoError("malformed PGM header: " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

}  // namespace detail

inline GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw IoError("not a binary PGM (P5) file: " + path);
    const int w = detail::pgm_next_int(in, path);
    const int h = detail::pgm_next_int(in, path);
    const int maxval = detail::pgm_next_int(in, path);
    if (maxval <= 0 || maxval > 255) throw IoError("PGM maxval " + std::to_string(maxval) +
                                                   " unsupported (8-bit only): " + path);
    GrayImage img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw IoError("truncated PGM payload: " + path);
    return img;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write image: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// PNG via libpng. 16-bit inputs are reduced to 8, palettes expanded, alpha
// dropped; color decodes through the 0.299/0.587/0.114 luminance formula.

inline GrayImage read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<std::uint8_t> raw;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("PNG decode failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    raw.assign(rowbytes * h, 0);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = raw.data() + y * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    if (channels == 1) {
        for (png_uint_32 y = 0; y < h; ++y)
            std::memcpy(&img.at(0, static_cast<int>(y)), raw.data() + y * rowbytes, w);
    } else if (channels == 3) {
        for (png_uint_32 y = 0; y < h; ++y) {
            const std::uint8_t* row = raw.data() + y * rowbytes;
            for (png_uint_32 x = 0; x < w; ++x)
                img.at(static_cast<int>(x), static_cast<int>(y)) =
                    luminance(row[3 * x], row[3 * x + 1], row[3 * x + 2]);
        }
    } else {
        throw IoError("unexpected PNG channel count " + std::to_string(channels) + ": " + path);
    }
    return img;
}

// Dispatch on the file's magic bytes.
inline GrayImage read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    unsigned char magic[8] = {0};
    in.read(reinterpret_cast<char*>(magic), 8);
    in.close();
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(magic, png_sig, 8) == 0) return read_png(path);
    if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
    throw IoError("unrecognized image format (PNG and binary PGM supported): " + path);
}

// Header-only dimension probe; avoids decoding full payloads during manifest
// ingestion.
inline std::pair<int, int> read_image_dims(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    unsigned char magic[8] = {0};
    in.read(reinterpret_cast<char*>(magic), 8);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (std::memcmp(magic, png_sig, 8) == 0) {
        // IHDR is always first: length(4) type(4) width(4) height(4) at offset 8.
        unsigned char hdr[17] = {0};
        in.read(reinterpret_cast<char*>(hdr), 16);
        if (in.gcount() != 16 || std::memcmp(hdr + 4, "IHDR", 4) != 0)
            throw IoError("malformed PNG header: " + path);
        const int w = (hdr[8] << 24) | (hdr[9] << 16) | (hdr[10] << 8) | hdr[11];
        const int h = (hdr[12] << 24) | (hdr[13] << 16) | (hdr[14] << 8) | hdr[15];
        return {w, h};
    }
    if (magic[0] == 'P' && magic[1] == '5') {
        in.seekg(2);
        const int w = detail::pgm_next_int(in, path);
        const int h = detail::pgm_next_int(in, path);
        return {w, h};
    }
    throw IoError("unrecognized image format (PNG and binary PGM supported): " + path);
}

}  // namespace radtk
