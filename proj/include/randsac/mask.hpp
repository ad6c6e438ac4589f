#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "randsac/segmenter.hpp"
#include "randsac/serializer.hpp"

namespace randsac {

enum class MaskKind { source, decoder_self, memory };

// N x N boolean permission matrix. Rows are queries, columns are keys;
// true means attention is permitted. Depends only on (SegmentMap,
// SerializationOrder), never on pixel content.
struct AttentionMask {
    std::int64_t n = 0;
    std::vector<std::uint8_t> allow;  // row-major n*n
    MaskKind kind = MaskKind::source;

    AttentionMask() = default;
    AttentionMask(std::int64_t n_, MaskKind k) : n(n_), allow(static_cast<std::size_t>(n_ * n_), 0), kind(k) {}

    bool at(std::int64_t i, std::int64_t j) const { return allow[static_cast<std::size_t>(i * n + j)] != 0; }
    void set(std::int64_t i, std::int64_t j, bool v) { allow[static_cast<std::size_t>(i * n + j)] = v ? 1 : 0; }

    bool operator==(const AttentionMask& o) const { return n == o.n && allow == o.allow; }
};

// Position of each token's segment in the flattened serialization order.
std::vector<int> token_ranks(const SegmentMap& map, const SerializationOrder& order);

// Encoder self-attention: permit (i,j) iff rank(j) <= rank(i).
AttentionMask build_source_mask(const SegmentMap& map, const SerializationOrder& order);

// Decoder self-attention: same rule as the source mask.
AttentionMask build_decoder_self_mask(const SegmentMap& map, const SerializationOrder& order);

// Decoder cross-attention: permit (i,j) iff rank(j) < rank(i); the first
// segment in the order may additionally attend to its own encoding.
AttentionMask build_memory_mask(const SegmentMap& map, const SerializationOrder& order);

AttentionMask all_true_mask(std::int64_t n);

// P1 PBM bitmap: permitted cells white (0), forbidden black (1).
void dump_mask(const AttentionMask& mask, const std::string& path);

}  // namespace randsac
