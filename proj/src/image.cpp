#include "dsc/image.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace dsc {

namespace {

// Viridis anchors (matplotlib), linearly interpolated.
constexpr std::array<std::array<double, 3>, 9> kViridis = {{
    {0.267004, 0.004874, 0.329415},
    {0.282623, 0.140926, 0.457517},
    {0.253935, 0.265254, 0.529983},
    {0.206756, 0.371758, 0.553117},
    {0.163625, 0.471133, 0.558148},
    {0.127568, 0.566949, 0.550556},
    {0.134692, 0.658636, 0.517649},
    {0.477504, 0.821444, 0.318195},
    {0.993248, 0.906157, 0.143936},
}};

std::array<unsigned char, 3> colormap(double t) {
    if (t < 0) t = 0;
    if (t > 1) t = 1;
    const double pos = t * (kViridis.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(pos), kViridis.size() - 2);
    const double frac = pos - static_cast<double>(i);
    std::array<unsigned char, 3> rgb;
    for (int c = 0; c < 3; ++c) {
        const double v = kViridis[i][static_cast<std::size_t>(c)] * (1 - frac) +
                         kViridis[i + 1][static_cast<std::size_t>(c)] * frac;
        rgb[static_cast<std::size_t>(c)] = static_cast<unsigned char>(std::lround(255.0 * v));
    }
    return rgb;
}

}  // namespace

void write_field_png(const std::string& path, const Tensor& field, double vmin, double vmax) {
    if (field.rank() != 2) throw std::runtime_error("png writer expects a rank-2 field");
    const int h = field.dim(0), w = field.dim(1);
    if (h < 1 || w < 1) throw std::runtime_error("empty field");
    const double span = vmax > vmin ? vmax - vmin : 1.0;

    std::vector<unsigned char> rows(static_cast<std::size_t>(h) * w * 3);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            unsigned char* px = &rows[(static_cast<std::size_t>(i) * w + j) * 3];
            const double v = field.at(i, j);
            if (std::isnan(v)) {
                px[0] = px[1] = px[2] = 200;
            } else {
                const auto rgb = colormap((v - vmin) / span);
                px[0] = rgb[0];
                px[1] = rgb[1];
                px[2] = rgb[2];
            }
        }

    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("png encode failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int i = 0; i < h; ++i)
        png_write_row(png, reinterpret_cast<png_bytep>(&rows[static_cast<std::size_t>(i) * w * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace dsc
