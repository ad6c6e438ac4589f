#pragma once

#include <optional>
#include <string>
#include <vector>

#include "randsac/rng.hpp"

namespace randsac {

struct Coord;

// Assignment of every token index to exactly one segment id in [0, K).
struct SegmentMap {
    std::vector<int> assignment;
    int num_segments = 0;

    int num_tokens() const { return static_cast<int>(assignment.size()); }

    // Checks the partition property: ids cover [0, K) with non-empty fibers.
    void validate() const;

    std::vector<std::vector<int>> fibers() const;
};

// Diagonal-covariance Gaussian mixture components on the [-2,2]^2 frame.
struct BlobParams {
    std::vector<double> mu_x, mu_y, sigma_x, sigma_y;

    int count() const { return static_cast<int>(mu_x.size()); }
};

// Token (r,c) -> segment (r/M)*(grid_w/M) + (c/M); each segment is a
// contiguous M x M block. M must divide both grid extents and the resulting
// partition must have at least two segments.
SegmentMap square_partition(int grid_h, int grid_w, int m);

// K components with means ~ U(-1.75, 1.75) per axis and standard deviations
// ~ U(0.5, 1) per axis.
BlobParams sample_blob_params(Rng& rng, int k);

// Argmax of the full normalized density per token; ties break to the lowest
// component index; empty components are dropped and ids compacted.
SegmentMap assign_tokens(const BlobParams& params, const std::vector<Coord>& coords);

// Sample-and-assign with rejection: retries while the realized segment count
// is < 2 (or, in strict mode, while any component came up empty). Raises a
// configuration error after max_retries rejections.
SegmentMap sample_blob_partition(Rng& rng, int k, const std::vector<Coord>& coords, bool strict = false,
                                 int max_retries = 100);

// Composes the assignment with a uniformly random permutation of token
// indices, destroying spatial coherence while preserving segment sizes.
SegmentMap shuffle_coherence(Rng& rng, const SegmentMap& map);

// P3 PPM visualization, one pixel per token colored by segment id.
void dump_segment_map(const SegmentMap& map, int grid_h, int grid_w, const std::string& path);

}  // namespace randsac
