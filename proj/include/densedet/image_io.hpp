#pragma once

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "densedet/common.hpp"

namespace densedet {

// Interleaved 8-bit RGB image, row-major.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // height * width * 3

    uint8_t& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * 3 + c]; }
    uint8_t at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * 3 + c]; }
};

// Float image in [0,1], planar-free (same interleaved layout).
struct ImageF32 {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    float& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * 3 + c]; }
};

inline ImageF32 to_float(const ImageU8& img) {
    ImageF32 out{img.width, img.height, {}};
    out.pixels.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = img.pixels[i] / 255.0f;
    return out;
}

inline ImageU8 to_u8(const ImageF32& img) {
    ImageU8 out{img.width, img.height, {}};
    out.pixels.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i)
        out.pixels[i] = uint8_t(clampf(img.pixels[i], 0.0f, 1.0f) * 255.0f + 0.5f);
    return out;
}

inline void write_png(const std::string& path, const ImageU8& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw RuntimeError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        std::fclose(fp);
        png_destroy_write_struct(&png, &info);
        throw RuntimeError("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + size_t(y) * img.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline ImageU8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw RuntimeError("cannot open for reading: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        std::fclose(fp);
        png_destroy_read_struct(&png, &info, nullptr);
        throw RuntimeError("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    ImageU8 img;
    img.width = int(png_get_image_width(png, info));
    img.height = int(png_get_image_height(png, info));
    img.pixels.resize(size_t(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        png_read_row(png, img.pixels.data() + size_t(y) * img.width * 3, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

}  // namespace densedet
