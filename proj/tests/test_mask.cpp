#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "randsac/errors.hpp"
#include "randsac/mask.hpp"
#include "randsac/tokenizer.hpp"

using namespace randsac;

TEST_CASE("per-token raster serialization reduces to the causal mask") {
    for (int g = 2; g <= 16; g += 2) {
        auto map = square_partition(g, g, 1);
        auto order = raster_order(map);
        auto src = build_source_mask(map, order);
        const std::int64_t n = g * g;
        REQUIRE(src.n == n);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j) CHECK(src.at(i, j) == (j <= i));
        auto mem = build_memory_mask(map, order);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < n; ++j)
                CHECK(mem.at(i, j) == (j < i || (i == 0 && j == 0)));
    }
}

TEST_CASE("hand-checked 4-token example with 3 segments") {
    SegmentMap map;
    map.num_segments = 3;
    map.assignment = {1, 0, 2, 0};  // tokens 1,3 form segment 0
    SerializationOrder order;
    order.groups = {{2}, {0}, {1}};  // serialize segment 2 first, then 0, then 1
    // ranks: token0 -> 2, token1 -> 1, token2 -> 0, token3 -> 1
    auto src = build_source_mask(map, order);
    const std::vector<std::vector<int>> want_src = {
        {1, 1, 1, 1},
        {0, 1, 1, 1},
        {0, 0, 1, 0},
        {0, 1, 1, 1},
    };
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(src.at(i, j) == (want_src[i][j] != 0));

    auto mem = build_memory_mask(map, order);
    const std::vector<std::vector<int>> want_mem = {
        {0, 1, 1, 1},
        {0, 0, 1, 0},
        {0, 0, 1, 0},  // first segment attends to its own encoding
        {0, 0, 1, 0},
    };
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(mem.at(i, j) == (want_mem[i][j] != 0));
}

TEST_CASE("decoder self mask equals the source mask with its own tag") {
    Rng rng(30);
    auto coords = token_coordinates(8, 8);
    auto map = sample_blob_partition(rng, 5, coords);
    auto order = random_flat_order(rng, map.num_segments);
    auto src = build_source_mask(map, order);
    auto dec = build_decoder_self_mask(map, order);
    CHECK(src == dec);
    CHECK(dec.kind == MaskKind::decoder_self);
    CHECK(src.kind == MaskKind::source);
}

TEST_CASE("memory permissions nest strictly inside source permissions") {
    Rng rng(31);
    auto coords = token_coordinates(8, 8);
    for (int trial = 0; trial < 50; ++trial) {
        auto map = sample_blob_partition(rng, 6, coords);
        auto order = random_flat_order(rng, map.num_segments);
        auto src = build_source_mask(map, order);
        auto mem = build_memory_mask(map, order);
        const auto ranks = token_ranks(map, order);
        for (std::int64_t i = 0; i < src.n; ++i)
            for (std::int64_t j = 0; j < src.n; ++j) {
                if (mem.at(i, j)) CHECK(src.at(i, j));
                // Within one segment: source permits, memory forbids
                // (except inside the first segment).
                if (ranks[static_cast<std::size_t>(i)] == ranks[static_cast<std::size_t>(j)]) {
                    CHECK(src.at(i, j));
                    CHECK(mem.at(i, j) == (ranks[static_cast<std::size_t>(i)] == 0));
                }
            }
    }
}

TEST_CASE("source mask diagonal is always permitted") {
    Rng rng(32);
    auto coords = token_coordinates(8, 8);
    for (int trial = 0; trial < 20; ++trial) {
        auto map = sample_blob_partition(rng, 4, coords);
        auto src = build_source_mask(map, random_flat_order(rng, map.num_segments));
        for (std::int64_t i = 0; i < src.n; ++i) CHECK(src.at(i, i));
    }
}

TEST_CASE("no mask ever has an all-false row") {
    Rng rng(33);
    auto coords = token_coordinates(8, 8);
    for (int trial = 0; trial < 50; ++trial) {
        auto map = sample_blob_partition(rng, 5, coords);
        auto order = random_flat_order(rng, map.num_segments);
        for (const auto& mask : {build_source_mask(map, order), build_memory_mask(map, order)}) {
            for (std::int64_t i = 0; i < mask.n; ++i) {
                bool any = false;
                for (std::int64_t j = 0; j < mask.n; ++j) any |= mask.at(i, j);
                CHECK(any);
            }
        }
    }
}

TEST_CASE("masks depend only on token ranks, not on segment labels") {
    SegmentMap a, b;
    a.num_segments = b.num_segments = 3;
    a.assignment = {0, 1, 2, 1};
    b.assignment = {2, 0, 1, 0};  // labels permuted by 0->2, 1->0, 2->1
    SerializationOrder oa, ob;
    oa.groups = {{1}, {2}, {0}};
    ob.groups = {{0}, {1}, {2}};  // same permutation applied to the order
    CHECK(build_source_mask(a, oa) == build_source_mask(b, ob));
    CHECK(build_memory_mask(a, oa) == build_memory_mask(b, ob));
}

TEST_CASE("later serialization position strictly enlarges the visible set") {
    Rng rng(34);
    auto coords = token_coordinates(8, 8);
    auto map = sample_blob_partition(rng, 5, coords);
    auto order = random_flat_order(rng, map.num_segments);
    auto src = build_source_mask(map, order);
    const auto ranks = token_ranks(map, order);
    for (std::int64_t i = 0; i < src.n; ++i) {
        std::int64_t visible = 0;
        for (std::int64_t j = 0; j < src.n; ++j) visible += src.at(i, j);
        std::int64_t expect = 0;
        for (int r : ranks) expect += r <= ranks[static_cast<std::size_t>(i)];
        CHECK(visible == expect);
    }
}

TEST_CASE("token_ranks rejects an order that does not match the map") {
    SegmentMap map;
    map.num_segments = 2;
    map.assignment = {0, 1};
    SerializationOrder order;
    order.groups = {{0}};
    CHECK_THROWS_AS(token_ranks(map, order), ContractError);
}

TEST_CASE("mask dump is a valid PBM with permitted cells white") {
    auto map = square_partition(2, 2, 1);
    auto mask = build_source_mask(map, raster_order(map));
    const std::string path = "mask_dump_test.pbm";
    dump_mask(mask, path);
    std::ifstream f(path);
    std::string magic;
    int w = 0, h = 0;
    f >> magic >> w >> h;
    CHECK(magic == "P1");
    CHECK(w == 4);
    CHECK(h == 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            int bit = -1;
            f >> bit;
            CHECK(bit == (j <= i ? 0 : 1));
        }
    std::remove(path.c_str());
}
