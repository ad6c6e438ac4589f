#pragma once

#include <cstdint>
#include <vector>

#include "randsac/image.hpp"
#include "randsac/tensor.hpp"

namespace randsac {

// Normalized grid coordinate of a token, in [-2, 2] per axis.
struct Coord {
    double x = 0;
    double y = 0;
};

// Raster-ordered patch tokens of one image: token i holds the flattened
// (channel-last) P x P x C pixel block at raster position i.
struct TokenGrid {
    int grid_h = 0;
    int grid_w = 0;
    int patch = 0;
    int channels = 0;
    Tensor<float> tokens;  // [N, P*P*C]

    int num_tokens() const { return grid_h * grid_w; }
    int token_dim() const { return patch * patch * channels; }
};

TokenGrid patchify(const Image& img, int patch);
Image unpatchify(const TokenGrid& grid);

// Fixed 2-D factorized sine-cosine positional encoding, [N, dim].
// dim must be divisible by 4 (half per axis, half sin / half cos).
Tensor<float> sincos_positions(int grid_h, int grid_w, int dim);

// Linearly spaced per axis with endpoints exactly +/-2; a single-token axis
// maps to 0. Token i is at (row = i / grid_w, col = i % grid_w).
std::vector<Coord> token_coordinates(int grid_h, int grid_w);

// Per-token standardization over the token's own values (population variance).
Tensor<float> normalize_targets(const TokenGrid& grid, float eps = 1e-6f);

}  // namespace randsac
