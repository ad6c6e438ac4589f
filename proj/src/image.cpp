#include "randsac/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "randsac/errors.hpp"
#include "randsac/rng.hpp"

namespace randsac {

namespace {

int ppm_next_int(std::istream& in) {
    // Skips whitespace and '#' comments.
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    in >> v;
    if (!in) throw DataError("ppm: malformed header");
    return v;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P3" && magic != "P6") throw DataError("read_ppm: unsupported magic '" + magic + "' in " + path);
    const int w = ppm_next_int(f);
    const int h = ppm_next_int(f);
    const int maxval = ppm_next_int(f);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw DataError("read_ppm: bad header in " + path);
    Image img(h, w, 3);
    if (magic == "P6") {
        f.get();  // single whitespace after maxval
        std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(f.gcount()) != buf.size()) throw DataError("read_ppm: truncated " + path);
        for (std::size_t i = 0; i < buf.size(); ++i) img.pix[i] = buf[i] / static_cast<float>(maxval);
    } else {
        for (std::size_t i = 0; i < img.pix.size(); ++i) {
            const int v = ppm_next_int(f);
            if (v < 0 || v > maxval) throw DataError("read_ppm: sample out of range in " + path);
            img.pix[i] = v / static_cast<float>(maxval);
        }
    }
    return img;
}

void write_ppm_p3(const Image& img, const std::string& path) {
    if (img.c != 1 && img.c != 3) throw DataError("write_ppm_p3: needs 1 or 3 channels");
    std::ofstream f(path);
    if (!f) throw DataError("write_ppm_p3: cannot open " + path);
    f << "P3\n" << img.w << " " << img.h << "\n255\n";
    for (int r = 0; r < img.h; ++r) {
        for (int col = 0; col < img.w; ++col) {
            for (int ch = 0; ch < 3; ++ch) {
                const float v = img.at(r, col, img.c == 1 ? 0 : ch);
                f << static_cast<int>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)) << " ";
            }
        }
        f << "\n";
    }
}

Image read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DataError("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw DataError("read_png: failed to decode " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    Image img(h, w, 3);
    for (int r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (int col = 0; col < w; ++col)
            for (int ch = 0; ch < 3; ++ch) img.at(r, col, ch) = row[static_cast<std::size_t>(col) * 3 + ch] / 255.f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

Image crop_resize_bilinear(const Image& src, int top, int left, int ch, int cw, int out_h, int out_w) {
    if (top < 0 || left < 0 || ch < 1 || cw < 1 || top + ch > src.h || left + cw > src.w)
        throw DataError("crop_resize_bilinear: crop window out of bounds");
    Image out(out_h, out_w, src.c);
    for (int r = 0; r < out_h; ++r) {
        // Align sample centers with the crop window.
        const double sy = out_h > 1 ? top + (static_cast<double>(r) * (ch - 1)) / (out_h - 1) : top + (ch - 1) / 2.0;
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, top + ch - 1);
        const double fy = sy - y0;
        for (int col = 0; col < out_w; ++col) {
            const double sx = out_w > 1 ? left + (static_cast<double>(col) * (cw - 1)) / (out_w - 1) : left + (cw - 1) / 2.0;
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, left + cw - 1);
            const double fx = sx - x0;
            for (int chn = 0; chn < src.c; ++chn) {
                const double v = (1 - fy) * ((1 - fx) * src.at(y0, x0, chn) + fx * src.at(y0, x1, chn)) +
                                 fy * ((1 - fx) * src.at(y1, x0, chn) + fx * src.at(y1, x1, chn));
                out.at(r, col, chn) = static_cast<float>(v);
            }
        }
    }
    return out;
}

Image hflip(const Image& src) {
    Image out(src.h, src.w, src.c);
    for (int r = 0; r < src.h; ++r)
        for (int col = 0; col < src.w; ++col)
            for (int ch = 0; ch < src.c; ++ch) out.at(r, col, ch) = src.at(r, src.w - 1 - col, ch);
    return out;
}

Image augment(Rng& rng, const Image& img) {
    const double area = static_cast<double>(img.h) * img.w;
    int top = 0, left = 0, ch = img.h, cw = img.w;
    bool found = false;
    for (int attempt = 0; attempt < 10 && !found; ++attempt) {
        const double target = rng.uniform(0.2, 1.0) * area;
        const double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
        const int w = static_cast<int>(std::lround(std::sqrt(target * aspect)));
        const int h = static_cast<int>(std::lround(std::sqrt(target / aspect)));
        if (w < 1 || h < 1 || w > img.w || h > img.h) continue;
        top = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.h - h + 1)));
        left = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.w - w + 1)));
        ch = h;
        cw = w;
        found = true;
    }
    if (!found) {
        // Center-crop fallback at the minimum admissible scale.
        const int side = std::min(img.h, img.w);
        top = (img.h - side) / 2;
        left = (img.w - side) / 2;
        ch = cw = side;
    }
    Image out = crop_resize_bilinear(img, top, left, ch, cw, img.h, img.w);
    if (rng.bernoulli(0.5)) out = hflip(out);
    return out;
}

}  // namespace randsac
