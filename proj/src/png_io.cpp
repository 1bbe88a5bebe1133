#include <png.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "exconsist/data.hpp"

namespace exconsist {

namespace {

struct FileHandle {
    FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode)
        : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
};

unsigned char quant8(double v) {
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(v * 255.0));
}

Tensor4 read_core(const std::string& path, bool gray) {
    FileHandle fh(path, "rb");
    if (!fh.f) throw std::runtime_error("png read: cannot open " + path);
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read: allocation failure");
    }
    std::vector<unsigned char> row;
    Tensor4 out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read: decode failure for " + path);
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);
    png_set_expand(png);  // palette -> rgb, gray<8 -> 8-bit, tRNS -> alpha
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (gray)
        png_set_rgb_to_gray(png, 1, -1.0, -1.0);
    else
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int ch = static_cast<int>(png_get_channels(png, info));
    const int want = gray ? 1 : 3;
    if (ch < want) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read: unexpected channel count in " + path);
    }
    out = Tensor4(1, want, h, w);
    row.resize(static_cast<std::size_t>(w) * ch);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < want; ++c)
                out.at(0, c, y, x) = row[static_cast<std::size_t>(x) * ch + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_core(const std::string& path, const unsigned char* rows, int h, int w,
                int channels) {
    FileHandle fh(path, "wb");
    if (!fh.f) throw std::runtime_error("png write: cannot open " + path);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write: allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write: encode failure for " + path);
    }
    png_init_io(png, fh.f);
    png_set_compression_level(png, 6);  // pinned for byte-stable outputs
    png_set_IHDR(png, info, w, h, 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(
                               rows + static_cast<std::size_t>(y) * w * channels));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor4 png_read_rgb(const std::string& path) { return read_core(path, false); }

Tensor4 png_read_gray(const std::string& path) { return read_core(path, true); }

void png_write_rgb(const std::string& path, const Tensor4& t, int item) {
    if (item < 0 || item >= t.n || t.c < 3)
        throw std::invalid_argument("png_write_rgb: bad item or channel count");
    std::vector<unsigned char> rows(static_cast<std::size_t>(t.h) * t.w * 3);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int c = 0; c < 3; ++c)
                rows[(static_cast<std::size_t>(y) * t.w + x) * 3 + c] =
                    quant8(t.at(item, c, y, x));
    write_core(path, rows.data(), t.h, t.w, 3);
}

void png_write_gray(const std::string& path, const Tensor4& t, int item, int channel) {
    if (item < 0 || item >= t.n || channel < 0 || channel >= t.c)
        throw std::invalid_argument("png_write_gray: bad item or channel");
    std::vector<unsigned char> rows(static_cast<std::size_t>(t.h) * t.w);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            rows[static_cast<std::size_t>(y) * t.w + x] = quant8(t.at(item, channel, y, x));
    write_core(path, rows.data(), t.h, t.w, 1);
}

}  // namespace exconsist
