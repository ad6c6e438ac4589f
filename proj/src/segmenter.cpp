#include "randsac/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "randsac/errors.hpp"
#include "randsac/tokenizer.hpp"

namespace randsac {

void SegmentMap::validate() const {
    if (num_segments < 1) throw ContractError("SegmentMap: segment count < 1");
    std::vector<int> counts(static_cast<std::size_t>(num_segments), 0);
    for (int id : assignment) {
        if (id < 0 || id >= num_segments) throw ContractError("SegmentMap: id out of range");
        ++counts[static_cast<std::size_t>(id)];
    }
    for (int c : counts)
        if (c == 0) throw ContractError("SegmentMap: empty segment fiber");
}

std::vector<std::vector<int>> SegmentMap::fibers() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(num_segments));
    for (int i = 0; i < num_tokens(); ++i) out[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
    return out;
}

SegmentMap square_partition(int grid_h, int grid_w, int m) {
    if (m <= 0 || grid_h % m != 0 || grid_w % m != 0)
        throw ConfigError("square_partition: M=" + std::to_string(m) + " does not divide grid " +
                          std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                          " (a 13x13 grid, for instance, admits no square partition)");
    const int blocks_w = grid_w / m;
    const int k = (grid_h / m) * blocks_w;
    if (k < 2)
        throw ConfigError("square_partition: M=" + std::to_string(m) + " yields a single segment; no prediction can be made");
    SegmentMap map;
    map.num_segments = k;
    map.assignment.resize(static_cast<std::size_t>(grid_h) * grid_w);
    for (int r = 0; r < grid_h; ++r)
        for (int c = 0; c < grid_w; ++c)
            map.assignment[static_cast<std::size_t>(r) * grid_w + c] = (r / m) * blocks_w + (c / m);
    return map;
}

BlobParams sample_blob_params(Rng& rng, int k) {
    if (k < 1) throw ConfigError("sample_blob_params: K must be >= 1");
    BlobParams p;
    p.mu_x.resize(static_cast<std::size_t>(k));
    p.mu_y.resize(static_cast<std::size_t>(k));
    p.sigma_x.resize(static_cast<std::size_t>(k));
    p.sigma_y.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        p.mu_x[static_cast<std::size_t>(i)] = rng.uniform(-1.75, 1.75);
        p.mu_y[static_cast<std::size_t>(i)] = rng.uniform(-1.75, 1.75);
        p.sigma_x[static_cast<std::size_t>(i)] = rng.uniform(0.5, 1.0);
        p.sigma_y[static_cast<std::size_t>(i)] = rng.uniform(0.5, 1.0);
    }
    return p;
}

namespace {

// Log of the full normalized bivariate density with diagonal covariance.
// The normalization constant participates in the argmax because sigma
// differs per component.
double log_density(const BlobParams& p, int k, double x, double y) {
    const auto i = static_cast<std::size_t>(k);
    const double dx = (x - p.mu_x[i]) / p.sigma_x[i];
    const double dy = (y - p.mu_y[i]) / p.sigma_y[i];
    return -std::log(2.0 * M_PI * p.sigma_x[i] * p.sigma_y[i]) - 0.5 * (dx * dx + dy * dy);
}

}  // namespace

SegmentMap assign_tokens(const BlobParams& params, const std::vector<Coord>& coords) {
    const int k = params.count();
    const int n = static_cast<int>(coords.size());
    std::vector<int> raw(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_ld = log_density(params, 0, coords[static_cast<std::size_t>(i)].x, coords[static_cast<std::size_t>(i)].y);
        for (int c = 1; c < k; ++c) {
            const double ld = log_density(params, c, coords[static_cast<std::size_t>(i)].x, coords[static_cast<std::size_t>(i)].y);
            if (ld > best_ld) {  // ties keep the lowest index
                best_ld = ld;
                best = c;
            }
        }
        raw[static_cast<std::size_t>(i)] = best;
    }
    // Drop empty components and compact ids to [0, K').
    std::vector<int> remap(static_cast<std::size_t>(k), -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        int& r = remap[static_cast<std::size_t>(raw[static_cast<std::size_t>(i)])];
        if (r < 0) r = next++;
    }
    SegmentMap map;
    map.num_segments = next;
    map.assignment.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        map.assignment[static_cast<std::size_t>(i)] = remap[static_cast<std::size_t>(raw[static_cast<std::size_t>(i)])];
    return map;
}

SegmentMap sample_blob_partition(Rng& rng, int k, const std::vector<Coord>& coords, bool strict, int max_retries) {
    if (k < 2) throw ConfigError("sample_blob_partition: K must be >= 2 for training");
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        BlobParams params = sample_blob_params(rng, k);
        SegmentMap map = assign_tokens(params, coords);
        if (map.num_segments < 2) continue;
        if (strict && map.num_segments != k) continue;
        map.validate();
        return map;
    }
    throw ConfigError("sample_blob_partition: rejection cap reached for K=" + std::to_string(k) + " on " +
                      std::to_string(coords.size()) + " tokens");
}

SegmentMap shuffle_coherence(Rng& rng, const SegmentMap& map) {
    std::vector<int> perm(map.assignment.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    SegmentMap out;
    out.num_segments = map.num_segments;
    out.assignment.resize(map.assignment.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        out.assignment[i] = map.assignment[static_cast<std::size_t>(perm[i])];
    return out;
}

void dump_segment_map(const SegmentMap& map, int grid_h, int grid_w, const std::string& path) {
    if (static_cast<int>(map.assignment.size()) != grid_h * grid_w)
        throw ConfigError("dump_segment_map: grid size does not match assignment length");
    std::ofstream f(path);
    if (!f) throw DataError("dump_segment_map: cannot open " + path);
    f << "P3\n" << grid_w << " " << grid_h << "\n255\n";
    for (int i = 0; i < grid_h * grid_w; ++i) {
        // Golden-ratio hue walk gives visually distinct colors per id.
        const double hue = std::fmod(0.618033988749895 * map.assignment[static_cast<std::size_t>(i)], 1.0);
        const double h6 = hue * 6.0;
        const int sector = static_cast<int>(h6) % 6;
        const double frac = h6 - std::floor(h6);
        const int v = 230, lo = 60;
        const int up = lo + static_cast<int>((v - lo) * frac);
        const int dn = v - static_cast<int>((v - lo) * frac);
        int r = 0, g = 0, b = 0;
        switch (sector) {
            case 0: r = v, g = up, b = lo; break;
            case 1: r = dn, g = v, b = lo; break;
            case 2: r = lo, g = v, b = up; break;
            case 3: r = lo, g = dn, b = v; break;
            case 4: r = up, g = lo, b = v; break;
            default: r = v, g = lo, b = dn; break;
        }
        f << r << " " << g << " " << b << "\n";
    }
}

}  // namespace randsac
