#include "randsac/serializer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "randsac/errors.hpp"
#include "randsac/tokenizer.hpp"

namespace randsac {

void SerializationOrder::validate(int num_segments) const {
    std::vector<int> seen(static_cast<std::size_t>(num_segments), 0);
    int total = 0;
    for (const auto& g : groups) {
        for (int id : g) {
            if (id < 0 || id >= num_segments) throw ContractError("SerializationOrder: id out of range");
            if (seen[static_cast<std::size_t>(id)]++) throw ContractError("SerializationOrder: duplicate segment id");
            ++total;
        }
    }
    if (total != num_segments) throw ContractError("SerializationOrder: not a permutation of segment ids");
}

SerializationOrder raster_order(const SegmentMap& map) {
    std::vector<int> first_token(static_cast<std::size_t>(map.num_segments), -1);
    for (int i = 0; i < map.num_tokens(); ++i) {
        int& ft = first_token[static_cast<std::size_t>(map.assignment[static_cast<std::size_t>(i)])];
        if (ft < 0) ft = i;
    }
    std::vector<int> ids(static_cast<std::size_t>(map.num_segments));
    std::iota(ids.begin(), ids.end(), 0);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        return first_token[static_cast<std::size_t>(a)] < first_token[static_cast<std::size_t>(b)];
    });
    SerializationOrder order;
    for (int id : ids) order.groups.push_back({id});
    return order;
}

SerializationOrder random_flat_order(Rng& rng, int num_segments) {
    if (num_segments < 1) throw ConfigError("random_flat_order: K must be >= 1");
    std::vector<int> ids(static_cast<std::size_t>(num_segments));
    std::iota(ids.begin(), ids.end(), 0);
    rng.shuffle(ids);
    SerializationOrder order;
    for (int id : ids) order.groups.push_back({id});
    return order;
}

namespace {

// Group `items` (by centroid) into at most `count` blobs; retries until at
// least two non-empty groups are realized.
std::vector<int> group_by_blobs(Rng& rng, const std::vector<Coord>& centroids, int count, int max_retries) {
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        BlobParams params = sample_blob_params(rng, count);
        SegmentMap grouped = assign_tokens(params, centroids);
        if (grouped.num_segments >= 2) return grouped.assignment;
    }
    throw ConfigError("hierarchical_order: rejection cap reached grouping " + std::to_string(centroids.size()) +
                      " items into " + std::to_string(count) + " partitions");
}

}  // namespace

SerializationOrder hierarchical_order(Rng& rng, const SegmentMap& map, const std::vector<Coord>& coords,
                                      const std::vector<int>& level_counts, int max_retries) {
    if (level_counts.empty() || level_counts.front() != map.num_segments)
        throw ConfigError("hierarchical_order: first level count must equal the realized segment count");
    for (std::size_t i = 1; i < level_counts.size(); ++i)
        if (level_counts[i] >= level_counts[i - 1])
            throw ConfigError("hierarchical_order: level counts must be strictly decreasing");

    const int k = map.num_segments;
    // Segment centroids on the same [-2,2] frame as the tokens.
    std::vector<Coord> centroids(static_cast<std::size_t>(k));
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < map.num_tokens(); ++i) {
        const auto s = static_cast<std::size_t>(map.assignment[static_cast<std::size_t>(i)]);
        centroids[s].x += coords[static_cast<std::size_t>(i)].x;
        centroids[s].y += coords[static_cast<std::size_t>(i)].y;
        ++sizes[s];
    }
    for (int s = 0; s < k; ++s) {
        centroids[static_cast<std::size_t>(s)].x /= sizes[static_cast<std::size_t>(s)];
        centroids[static_cast<std::size_t>(s)].y /= sizes[static_cast<std::size_t>(s)];
    }

    SerializationOrder order;
    if (level_counts.size() == 1) {
        // No grouping constraint; identical in distribution to a flat shuffle.
        SerializationOrder flat = random_flat_order(rng, k);
        return flat;
    }

    // level_assign[l][s]: group id of segment s at grouping level l (finest first).
    std::vector<std::vector<int>> level_assign;
    std::vector<Coord> items = centroids;       // centroids of the current level's groups
    std::vector<int> item_of_segment(static_cast<std::size_t>(k));
    std::iota(item_of_segment.begin(), item_of_segment.end(), 0);
    for (std::size_t l = 1; l < level_counts.size(); ++l) {
        std::vector<int> grouping = group_by_blobs(rng, items, level_counts[l], max_retries);
        std::vector<int> seg_level(static_cast<std::size_t>(k));
        for (int s = 0; s < k; ++s)
            seg_level[static_cast<std::size_t>(s)] = grouping[static_cast<std::size_t>(item_of_segment[static_cast<std::size_t>(s)])];
        level_assign.push_back(seg_level);
        // Centroids of the new groups, for the next coarser level.
        const int g_count = 1 + *std::max_element(grouping.begin(), grouping.end());
        std::vector<Coord> next(static_cast<std::size_t>(g_count));
        std::vector<int> cnt(static_cast<std::size_t>(g_count), 0);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto g = static_cast<std::size_t>(grouping[i]);
            next[g].x += items[i].x;
            next[g].y += items[i].y;
            ++cnt[g];
        }
        for (int g = 0; g < g_count; ++g) {
            next[static_cast<std::size_t>(g)].x /= cnt[static_cast<std::size_t>(g)];
            next[static_cast<std::size_t>(g)].y /= cnt[static_cast<std::size_t>(g)];
        }
        items = std::move(next);
        for (int s = 0; s < k; ++s)
            item_of_segment[static_cast<std::size_t>(s)] = level_assign.back()[static_cast<std::size_t>(s)];
    }

    // Traverse coarsest -> finest with a fresh random order at every node.
    std::vector<int> flat;
    flat.reserve(static_cast<std::size_t>(k));
    // seed: segments grouped by coarsest level id.
    struct Frame {
        std::vector<int> segments;  // segment ids inside this node
        int level;                  // index into level_assign; -1 = leaf shuffle
    };
    std::vector<Frame> stack;
    {
        const auto& top = level_assign.back();
        const int g_count = 1 + *std::max_element(top.begin(), top.end());
        std::vector<std::vector<int>> by_group(static_cast<std::size_t>(g_count));
        for (int s = 0; s < k; ++s) by_group[static_cast<std::size_t>(top[static_cast<std::size_t>(s)])].push_back(s);
        std::vector<int> group_order(static_cast<std::size_t>(g_count));
        std::iota(group_order.begin(), group_order.end(), 0);
        rng.shuffle(group_order);
        for (auto it = group_order.rbegin(); it != group_order.rend(); ++it)
            stack.push_back({by_group[static_cast<std::size_t>(*it)], static_cast<int>(level_assign.size()) - 2});
    }
    while (!stack.empty()) {
        Frame fr = std::move(stack.back());
        stack.pop_back();
        if (fr.level < 0) {
            rng.shuffle(fr.segments);
            flat.insert(flat.end(), fr.segments.begin(), fr.segments.end());
            continue;
        }
        const auto& assign = level_assign[static_cast<std::size_t>(fr.level)];
        std::vector<int> sub_ids;
        std::vector<std::vector<int>> by_sub;
        std::vector<int> sub_index(level_assign[static_cast<std::size_t>(fr.level)].size(), -1);
        for (int s : fr.segments) {
            const int g = assign[static_cast<std::size_t>(s)];
            if (sub_index[static_cast<std::size_t>(g)] < 0) {
                sub_index[static_cast<std::size_t>(g)] = static_cast<int>(by_sub.size());
                by_sub.emplace_back();
                sub_ids.push_back(g);
            }
            by_sub[static_cast<std::size_t>(sub_index[static_cast<std::size_t>(g)])].push_back(s);
        }
        std::vector<int> perm(by_sub.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (auto it = perm.rbegin(); it != perm.rend(); ++it)
            stack.push_back({by_sub[static_cast<std::size_t>(*it)], fr.level - 1});
    }

    // Groups in the output are the finest-level partitions, in traversal order.
    const auto& finest = level_assign.front();
    order.level_groups = level_assign;
    std::vector<int> cur_group;
    int cur_id = -1;
    for (int s : flat) {
        const int g = finest[static_cast<std::size_t>(s)];
        if (g != cur_id && !cur_group.empty()) {
            order.groups.push_back(cur_group);
            cur_group.clear();
        }
        cur_id = g;
        cur_group.push_back(s);
    }
    if (!cur_group.empty()) order.groups.push_back(cur_group);
    order.validate(k);
    return order;
}

void dump_order(const SerializationOrder& order, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("dump_order: cannot open " + path);
    for (std::size_t g = 0; g < order.groups.size(); ++g) {
        f << "group " << g << ":";
        for (int id : order.groups[g]) f << " " << id;
        f << "\n";
    }
    f << "flattened:";
    for (int id : order.flattened()) f << " " << id;
    f << "\n";
}

}  // namespace randsac
