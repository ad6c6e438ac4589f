#include "randsac/mask.hpp"

#include <fstream>

#include "randsac/errors.hpp"

namespace randsac {

std::vector<int> token_ranks(const SegmentMap& map, const SerializationOrder& order) {
    order.validate(map.num_segments);
    std::vector<int> rank_of_segment(static_cast<std::size_t>(map.num_segments), -1);
    int pos = 0;
    for (int id : order.flattened()) rank_of_segment[static_cast<std::size_t>(id)] = pos++;
    std::vector<int> ranks(static_cast<std::size_t>(map.num_tokens()));
    for (int i = 0; i < map.num_tokens(); ++i)
        ranks[static_cast<std::size_t>(i)] = rank_of_segment[static_cast<std::size_t>(map.assignment[static_cast<std::size_t>(i)])];
    return ranks;
}

AttentionMask build_source_mask(const SegmentMap& map, const SerializationOrder& order) {
    const auto ranks = token_ranks(map, order);
    const std::int64_t n = map.num_tokens();
    AttentionMask mask(n, MaskKind::source);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            mask.set(i, j, ranks[static_cast<std::size_t>(j)] <= ranks[static_cast<std::size_t>(i)]);
    return mask;
}

AttentionMask build_decoder_self_mask(const SegmentMap& map, const SerializationOrder& order) {
    AttentionMask mask = build_source_mask(map, order);
    mask.kind = MaskKind::decoder_self;
    return mask;
}

AttentionMask build_memory_mask(const SegmentMap& map, const SerializationOrder& order) {
    const auto ranks = token_ranks(map, order);
    const std::int64_t n = map.num_tokens();
    AttentionMask mask(n, MaskKind::memory);
    for (std::int64_t i = 0; i < n; ++i) {
        const int ri = ranks[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < n; ++j) {
            const int rj = ranks[static_cast<std::size_t>(j)];
            // Strictly earlier segments only; the first segment has no
            // predecessor and may attend to its own encoding instead.
            mask.set(i, j, rj < ri || (ri == 0 && rj == 0));
        }
    }
    return mask;
}

AttentionMask all_true_mask(std::int64_t n) {
    AttentionMask mask(n, MaskKind::source);
    std::fill(mask.allow.begin(), mask.allow.end(), 1);
    return mask;
}

void dump_mask(const AttentionMask& mask, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("dump_mask: cannot open " + path);
    f << "P1\n" << mask.n << " " << mask.n << "\n";
    for (std::int64_t i = 0; i < mask.n; ++i) {
        for (std::int64_t j = 0; j < mask.n; ++j) f << (mask.at(i, j) ? 0 : 1) << (j + 1 < mask.n ? " " : "");
        f << "\n";
    }
}

}  // namespace randsac
