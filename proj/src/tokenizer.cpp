#include "randsac/tokenizer.hpp"

#include <cmath>

#include "randsac/errors.hpp"

namespace randsac {

TokenGrid patchify(const Image& img, int patch) {
    if (patch <= 0 || img.h % patch != 0 || img.w % patch != 0)
        throw ConfigError("patchify: patch size " + std::to_string(patch) + " does not divide image " +
                          std::to_string(img.h) + "x" + std::to_string(img.w));
    TokenGrid g;
    g.grid_h = img.h / patch;
    g.grid_w = img.w / patch;
    g.patch = patch;
    g.channels = img.c;
    const int n = g.num_tokens();
    const int d = g.token_dim();
    g.tokens = Tensor<float>({n, d});
    for (int t = 0; t < n; ++t) {
        const int r0 = (t / g.grid_w) * patch;
        const int c0 = (t % g.grid_w) * patch;
        float* dst = g.tokens.ptr() + static_cast<std::int64_t>(t) * d;
        int idx = 0;
        for (int r = 0; r < patch; ++r)
            for (int c = 0; c < patch; ++c)
                for (int ch = 0; ch < img.c; ++ch) dst[idx++] = img.at(r0 + r, c0 + c, ch);
    }
    return g;
}

Image unpatchify(const TokenGrid& grid) {
    Image img(grid.grid_h * grid.patch, grid.grid_w * grid.patch, grid.channels);
    const int n = grid.num_tokens();
    const int d = grid.token_dim();
    for (int t = 0; t < n; ++t) {
        const int r0 = (t / grid.grid_w) * grid.patch;
        const int c0 = (t % grid.grid_w) * grid.patch;
        const float* src = grid.tokens.ptr() + static_cast<std::int64_t>(t) * d;
        int idx = 0;
        for (int r = 0; r < grid.patch; ++r)
            for (int c = 0; c < grid.patch; ++c)
                for (int ch = 0; ch < grid.channels; ++ch) img.at(r0 + r, c0 + c, ch) = src[idx++];
    }
    return img;
}

Tensor<float> sincos_positions(int grid_h, int grid_w, int dim) {
    if (dim <= 0 || dim % 4 != 0)
        throw ConfigError("sincos_positions: dim " + std::to_string(dim) + " must be divisible by 4");
    const int n = grid_h * grid_w;
    const int quarter = dim / 4;
    Tensor<float> out({n, dim});
    for (int t = 0; t < n; ++t) {
        const double row = t / grid_w;
        const double col = t % grid_w;
        float* dst = out.ptr() + static_cast<std::int64_t>(t) * dim;
        for (int i = 0; i < quarter; ++i) {
            const double omega = std::pow(10000.0, -static_cast<double>(i) / quarter);
            dst[i] = static_cast<float>(std::sin(col * omega));
            dst[quarter + i] = static_cast<float>(std::cos(col * omega));
            dst[2 * quarter + i] = static_cast<float>(std::sin(row * omega));
            dst[3 * quarter + i] = static_cast<float>(std::cos(row * omega));
        }
    }
    return out;
}

std::vector<Coord> token_coordinates(int grid_h, int grid_w) {
    std::vector<Coord> coords(static_cast<std::size_t>(grid_h) * grid_w);
    for (int r = 0; r < grid_h; ++r) {
        const double y = grid_h > 1 ? -2.0 + 4.0 * r / (grid_h - 1) : 0.0;
        for (int c = 0; c < grid_w; ++c) {
            const double x = grid_w > 1 ? -2.0 + 4.0 * c / (grid_w - 1) : 0.0;
            coords[static_cast<std::size_t>(r) * grid_w + c] = {x, y};
        }
    }
    return coords;
}

Tensor<float> normalize_targets(const TokenGrid& grid, float eps) {
    const int n = grid.num_tokens();
    const int d = grid.token_dim();
    Tensor<float> out({n, d});
    for (int t = 0; t < n; ++t) {
        const float* src = grid.tokens.ptr() + static_cast<std::int64_t>(t) * d;
        float* dst = out.ptr() + static_cast<std::int64_t>(t) * d;
        double mean = 0;
        for (int j = 0; j < d; ++j) mean += src[j];
        mean /= d;
        double var = 0;
        for (int j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j) dst[j] = static_cast<float>((src[j] - mean) * inv);
    }
    return out;
}

}  // namespace randsac
