#include "cfc/image_io.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace cfc::imageio {

namespace {
struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;
} // namespace

void save_png(const Tensor& img, const std::string& path) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw std::invalid_argument("save_png: need [3,H,W]");
    int H = img.shape[1], W = img.shape[2];
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("save_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("save_png: libpng failure on " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, W, H, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(img.at3(c, y, x), 0.0, 1.0);
                row[x * 3 + c] = static_cast<png_byte>(v * 255.0 + 0.5);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("load_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: libpng failure on " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    int W = png_get_image_width(png, info);
    int H = png_get_image_height(png, info);
    Tensor img({3, H, W});
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) img.at3(c, y, x) = row[x * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Tensor make_mosaic(const std::vector<Tensor>& images, int cols) {
    if (images.empty() || cols < 1) throw std::invalid_argument("make_mosaic: empty input");
    int H = images[0].shape[1], W = images[0].shape[2];
    int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
    const int sep = 2;
    Tensor out({3, rows * H + (rows - 1) * sep, cols * W + (cols - 1) * sep});
    for (size_t i = 0; i < images.size(); ++i) {
        const Tensor& im = images[i];
        if (im.shape != images[0].shape)
            throw std::invalid_argument("make_mosaic: mixed image sizes");
        int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
        int oy = r * (H + sep), ox = c * (W + sep);
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    out.at3(ch, oy + y, ox + x) = im.at3(ch, y, x);
    }
    return out;
}

} // namespace cfc::imageio
