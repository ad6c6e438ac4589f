#pragma once

#include <string>
#include <vector>

namespace randsac {

class Rng;

// H x W x C real image with values in [0,1], channel-last row-major storage.
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), pix(static_cast<std::size_t>(h_) * w_ * c_, 0.f) {}

    float at(int r, int col, int ch) const { return pix[(static_cast<std::size_t>(r) * w + col) * c + ch]; }
    float& at(int r, int col, int ch) { return pix[(static_cast<std::size_t>(r) * w + col) * c + ch]; }
};

Image read_ppm(const std::string& path);
void write_ppm_p3(const Image& img, const std::string& path);
Image read_png(const std::string& path);

// Bilinear resample of a crop window [top, top+ch) x [left, left+cw) to out_h x out_w.
Image crop_resize_bilinear(const Image& src, int top, int left, int ch, int cw, int out_h, int out_w);

Image hflip(const Image& src);

// Random resized crop: area fraction ~ U(0.2, 1.0), log-uniform aspect in
// [3/4, 4/3], random location, bilinear resize back to the source size;
// then a 50% horizontal flip. No color jitter. Falls back to a center crop
// after 10 failed attempts.
Image augment(Rng& rng, const Image& img);

}  // namespace randsac
