#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "randsac/gradcheck.hpp"
#include "randsac/model.hpp"
#include "test_support.hpp"

using namespace randsac;
using randsac::testing::random_image;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.layers_enc = 2;
    cfg.layers_dec = 1;
    cfg.mlp_ratio = 2;
    cfg.patch = 1;
    cfg.grid_h = 4;
    cfg.grid_w = 4;
    cfg.channels = 3;
    return cfg;
}

TokenGrid tiny_grid(Rng& rng, const ModelConfig& cfg) {
    return patchify(random_image(rng, cfg.grid_h * cfg.patch, cfg.grid_w * cfg.patch, cfg.channels), cfg.patch);
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
    Rng rng(40);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    const std::int64_t d = cfg.dim, td = cfg.token_dim(), hd = cfg.dim * cfg.mlp_ratio;
    const std::int64_t attn = 4 * (d * d + d);
    const std::int64_t enc_block = 2 * (d + d) + attn + hd * (d + 1) + d * (hd + 1);
    const std::int64_t dec_block = 3 * (d + d) + 2 * attn + hd * (d + 1) + d * (hd + 1);
    const std::int64_t expect = td * d + d                    // patch embed
                                + cfg.layers_enc * enc_block + 2 * d  // enc + final norm
                                + cfg.layers_dec * dec_block + 2 * d  // dec + final norm
                                + cfg.layers_dec * cfg.layers_enc     // skip weights
                                + d * d + d                           // query embed
                                + d * td + td;                        // head
    CHECK(s.param_count() == expect);
}

TEST_CASE("skip weights start one-hot on the last encoder layer") {
    Rng rng(41);
    ModelConfig cfg = tiny_config();
    cfg.layers_enc = 3;
    cfg.layers_dec = 2;
    auto s = ModelState<float>::init(cfg, rng);
    for (int l = 0; l < cfg.layers_dec; ++l)
        for (int k = 0; k < cfg.layers_enc; ++k)
            CHECK(s.skip_w.value.data[static_cast<std::size_t>(l * cfg.layers_enc + k)] ==
                  (k == cfg.layers_enc - 1 ? 1.f : 0.f));
}

TEST_CASE("one-hot skip memory reduces to the last encoder layer") {
    Rng rng(42);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    auto grid = tiny_grid(rng, cfg);
    Graph<float> g;
    auto trace = encode(g, s, grid.tokens, all_true_mask(cfg.num_tokens()));
    auto memories = skip_memory(g, s, trace);
    const auto& mixed = g.value(memories[0]);
    const auto& last = g.value(trace.back());
    REQUIRE(mixed.shape == last.shape);
    for (std::int64_t i = 0; i < mixed.numel(); ++i)
        CHECK(std::abs(mixed.data[static_cast<std::size_t>(i)] - last.data[static_cast<std::size_t>(i)]) <= 1e-6f);
}

TEST_CASE("half-half skip weights average two encoder layers") {
    Rng rng(43);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    s.skip_w.value.data = {0.5f, 0.5f};
    auto grid = tiny_grid(rng, cfg);
    Graph<float> g;
    auto trace = encode(g, s, grid.tokens, all_true_mask(cfg.num_tokens()));
    auto memories = skip_memory(g, s, trace);
    const auto& mixed = g.value(memories[0]);
    const auto& h0 = g.value(trace[0]);
    const auto& h1 = g.value(trace[1]);
    for (std::int64_t i = 0; i < mixed.numel(); ++i)
        CHECK(mixed.data[static_cast<std::size_t>(i)] ==
              doctest::Approx(0.5f * (h0.data[static_cast<std::size_t>(i)] + h1.data[static_cast<std::size_t>(i)]))
                  .epsilon(1e-5));
}

TEST_CASE("single-segment source mask reproduces the unmasked encoder bitwise") {
    Rng rng(44);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    auto grid = tiny_grid(rng, cfg);
    SegmentMap one;
    one.num_segments = 1;
    one.assignment.assign(static_cast<std::size_t>(cfg.num_tokens()), 0);
    auto mask = build_source_mask(one, raster_order(one));
    Graph<float> ga, gb;
    auto a = encode(ga, s, grid.tokens, mask);
    auto b = encode(gb, s, grid.tokens, all_true_mask(cfg.num_tokens()));
    CHECK(ga.value(a.back()).data == gb.value(b.back()).data);
}

TEST_CASE("encoder outputs ignore later-rank segments bitwise") {
    Rng rng(45);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    auto coords = token_coordinates(cfg.grid_h, cfg.grid_w);
    for (int trial = 0; trial < 20; ++trial) {
        auto grid = tiny_grid(rng, cfg);
        auto map = sample_blob_partition(rng, 4, coords);
        auto order = random_flat_order(rng, map.num_segments);
        auto mask = build_source_mask(map, order);
        const auto ranks = token_ranks(map, order);
        const int cut = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(map.num_segments - 1)));

        TokenGrid pert = grid;
        for (int i = 0; i < cfg.num_tokens(); ++i)
            if (ranks[static_cast<std::size_t>(i)] >= cut)
                for (int j = 0; j < cfg.token_dim(); ++j)
                    pert.tokens.data[static_cast<std::size_t>(i * cfg.token_dim() + j)] += 5.f;

        Graph<float> ga, gb;
        const auto& va = ga.value(encode(ga, s, grid.tokens, mask).back());
        const auto& vb = gb.value(encode(gb, s, pert.tokens, mask).back());
        for (int i = 0; i < cfg.num_tokens(); ++i)
            if (ranks[static_cast<std::size_t>(i)] < cut)
                for (int j = 0; j < cfg.dim; ++j)
                    CHECK(va.data[static_cast<std::size_t>(i * cfg.dim + j)] ==
                          vb.data[static_cast<std::size_t>(i * cfg.dim + j)]);
    }
}

TEST_CASE("decoder predictions ignore the target segment and its successors bitwise") {
    Rng rng(46);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    auto coords = token_coordinates(cfg.grid_h, cfg.grid_w);
    for (int trial = 0; trial < 20; ++trial) {
        auto grid = tiny_grid(rng, cfg);
        auto map = sample_blob_partition(rng, 4, coords);
        auto order = random_flat_order(rng, map.num_segments);
        const auto ranks = token_ranks(map, order);
        const int cut = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(map.num_segments - 1)));

        TokenGrid pert = grid;
        for (int i = 0; i < cfg.num_tokens(); ++i)
            if (ranks[static_cast<std::size_t>(i)] >= cut)
                for (int j = 0; j < cfg.token_dim(); ++j)
                    pert.tokens.data[static_cast<std::size_t>(i * cfg.token_dim() + j)] += 5.f;

        auto run = [&](const TokenGrid& gr) {
            Graph<float> g;
            auto trace = encode(g, s, gr.tokens, build_source_mask(map, order));
            auto memories = skip_memory(g, s, trace);
            NodeId pred = decode(g, s, memories, build_decoder_self_mask(map, order), build_memory_mask(map, order));
            return g.value(pred);
        };
        const auto va = run(grid), vb = run(pert);
        // A token at rank r reads memories of ranks < r only, so predictions
        // at ranks <= cut cannot move when segments >= cut change.
        for (int i = 0; i < cfg.num_tokens(); ++i)
            if (ranks[static_cast<std::size_t>(i)] <= cut)
                for (int j = 0; j < cfg.token_dim(); ++j)
                    CHECK(va.data[static_cast<std::size_t>(i * cfg.token_dim() + j)] ==
                          vb.data[static_cast<std::size_t>(i * cfg.token_dim() + j)]);
    }
}

TEST_CASE("full pretraining loss gradient matches finite differences") {
    Rng rng(47);
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.layers_enc = 2;
    cfg.layers_dec = 1;
    cfg.mlp_ratio = 2;
    cfg.patch = 1;
    cfg.grid_h = 3;
    cfg.grid_w = 3;
    cfg.channels = 1;
    auto s = ModelState<double>::init(cfg, rng);
    auto grid = patchify(random_image(rng, 3, 3, 1), 1);
    auto coords = token_coordinates(3, 3);
    auto map = sample_blob_partition(rng, 3, coords);
    auto order = random_flat_order(rng, map.num_segments);
    PretrainLossOptions opt;
    opt.normalize_pixels = true;
    opt.exclude_first_segment = true;

    std::vector<std::pair<std::string, Parameter<double>*>> params;
    s.for_each_param([&](const std::string& name, Parameter<double>& p) { params.emplace_back(name, &p); });
    auto loss_fn = [&](bool with_grad) {
        Graph<double> g;
        NodeId l = forward_pretrain(g, s, grid, map, order, opt);
        if (with_grad) {
            s.zero_grad();
            g.backward(l);
        }
        return g.value(l).data[0];
    };
    auto res = grad_check<double>(params, loss_fn);
    INFO("worst: ", res.worst_param, "[", res.worst_index, "] rel err ", res.max_rel_err);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("excluding the first segment zeroes its loss contribution") {
    Rng rng(48);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    auto grid = tiny_grid(rng, cfg);
    auto coords = token_coordinates(cfg.grid_h, cfg.grid_w);
    auto map = sample_blob_partition(rng, 3, coords);
    auto order = random_flat_order(rng, map.num_segments);
    const auto ranks = token_ranks(map, order);

    PretrainLossOptions incl, excl;
    excl.exclude_first_segment = true;
    Graph<float> ga, gb;
    const float li = ga.value(forward_pretrain(ga, s, grid, map, order, incl)).data[0];
    const float le = gb.value(forward_pretrain(gb, s, grid, map, order, excl)).data[0];
    CHECK(li != le);
    // Oracle: recompute the weighted mean of per-token squared errors from
    // the raw predictions; excluded rows contribute nothing.
    Graph<float> gc;
    auto trace = encode(gc, s, grid.tokens, build_source_mask(map, order));
    NodeId pred = decode(gc, s, skip_memory(gc, s, trace), build_decoder_self_mask(map, order),
                         build_memory_mask(map, order));
    const auto& vp = gc.value(pred);
    const int d = cfg.token_dim();
    double want_incl = 0, want_excl = 0;
    long rows_excl = 0;
    for (int i = 0; i < cfg.num_tokens(); ++i) {
        double row = 0;
        for (int j = 0; j < d; ++j) {
            const double e = vp.data[static_cast<std::size_t>(i * d + j)] -
                             grid.tokens.data[static_cast<std::size_t>(i * d + j)];
            row += e * e;
        }
        want_incl += row;
        if (ranks[static_cast<std::size_t>(i)] != 0) {
            want_excl += row;
            ++rows_excl;
        }
    }
    want_incl /= static_cast<double>(cfg.num_tokens()) * d;
    want_excl /= static_cast<double>(rows_excl) * d;
    CHECK(li == doctest::Approx(want_incl).epsilon(1e-4));
    CHECK(le == doctest::Approx(want_excl).epsilon(1e-4));
}

TEST_CASE("extract_features is deterministic, pooled, and mask independent") {
    Rng rng(49);
    ModelConfig cfg = tiny_config();
    auto s = ModelState<float>::init(cfg, rng);
    auto grid = tiny_grid(rng, cfg);
    auto f1 = extract_features(s, grid);
    auto f2 = extract_features(s, grid);
    CHECK(f1.shape == Shape{cfg.dim});
    CHECK(f1.data == f2.data);
}

TEST_CASE("cast to double preserves parameter values") {
    Rng rng(50);
    auto s = ModelState<float>::init(tiny_config(), rng);
    auto d = s.template cast<double>();
    CHECK(d.param_count() == s.param_count());
    std::vector<double> dv;
    d.for_each_param([&](const std::string&, Parameter<double>& p) {
        for (double v : p.value.data) dv.push_back(v);
    });
    std::size_t i = 0;
    s.for_each_param([&](const std::string&, Parameter<float>& p) {
        for (float v : p.value.data) CHECK(static_cast<double>(v) == dv[i++]);
    });
}

TEST_CASE("config validation rejects inconsistent settings") {
    ModelConfig cfg = tiny_config();
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.layers_dec = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.dim = 18;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
