#pragma once

#include <string>
#include <vector>

#include "randsac/rng.hpp"
#include "randsac/segmenter.hpp"

namespace randsac {

// Ordered sequence of segment-id groups; flattened it is a permutation of
// [0, K). For hierarchical orders, level_groups[l][s] gives segment s's group
// id at grouping level l (finest to coarsest); segments sharing a group id at
// any level are contiguous in the flattened order.
struct SerializationOrder {
    std::vector<std::vector<int>> groups;
    std::vector<std::vector<int>> level_groups;

    std::vector<int> flattened() const {
        std::vector<int> out;
        for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
        return out;
    }

    // Checks that the flattened order is a permutation of [0, K).
    void validate(int num_segments) const;
};

// Segments sorted by the raster index of their smallest-index token.
SerializationOrder raster_order(const SegmentMap& map);

// Uniform random permutation of segment ids (Fisher-Yates).
SerializationOrder random_flat_order(Rng& rng, int num_segments);

// Random traversal of a random hierarchy: segment centroids are grouped into
// successively coarser partitions with the same Gaussian-blob machinery, then
// the order is drawn by shuffling groups at every level. level_counts is the
// strictly decreasing sequence of group counts, finest first, beginning with
// the realized segment count (e.g. {7, 3}).
SerializationOrder hierarchical_order(Rng& rng, const SegmentMap& map, const std::vector<Coord>& coords,
                                      const std::vector<int>& level_counts, int max_retries = 100);

// Text listing of groups and the flattened order.
void dump_order(const SerializationOrder& order, const std::string& path);

}  // namespace randsac
