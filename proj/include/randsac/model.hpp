#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "randsac/graph.hpp"
#include "randsac/tokenizer.hpp"

namespace randsac {

struct ModelConfig {
    int dim = 64;
    int heads = 4;
    int layers_enc = 4;
    int layers_dec = 2;
    int mlp_ratio = 4;
    int patch = 4;
    int grid_h = 8;
    int grid_w = 8;
    int channels = 3;

    int num_tokens() const { return grid_h * grid_w; }
    int token_dim() const { return patch * patch * channels; }

    void validate() const {
        if (dim <= 0 || dim % heads != 0) throw ConfigError("model: dim must be a positive multiple of heads");
        if (dim % 4 != 0) throw ConfigError("model: dim must be divisible by 4 for sine-cosine positions");
        if (layers_enc < 1 || layers_dec < 1) throw ConfigError("model: encoder and decoder need at least one layer");
        if (mlp_ratio < 1) throw ConfigError("model: mlp_ratio must be >= 1");
    }

    bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct AttnParams {
    Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class T>
struct EncBlock {
    Parameter<T> ln1_g, ln1_b;
    AttnParams<T> attn;
    Parameter<T> ln2_g, ln2_b;
    Parameter<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <class T>
struct DecBlock {
    Parameter<T> ln1_g, ln1_b;
    AttnParams<T> self_attn;
    Parameter<T> ln2_g, ln2_b;
    AttnParams<T> cross_attn;
    Parameter<T> ln3_g, ln3_b;
    Parameter<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Encoder-decoder transformer with trainable skip connections. The skip
// weight matrix mixes all encoder layer outputs into each decoder layer's
// memory; initialized one-hot on the last encoder layer so training starts
// at the vanilla masked transformer.
template <class T>
struct ModelState {
    ModelConfig cfg;
    Parameter<T> patch_w, patch_b;
    std::vector<EncBlock<T>> enc;
    Parameter<T> enc_ln_g, enc_ln_b;
    std::vector<DecBlock<T>> dec;
    Parameter<T> dec_ln_g, dec_ln_b;
    Parameter<T> skip_w;  // [layers_dec, layers_enc]
    Parameter<T> query_w, query_b;
    Parameter<T> head_w, head_b;
    Tensor<T> pos;  // fixed [N, dim] sine-cosine table

    static ModelState init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        ModelState s;
        s.cfg = cfg;
        const std::int64_t d = cfg.dim, td = cfg.token_dim(), hd = cfg.dim * cfg.mlp_ratio;
        auto xavier = [&rng](Shape shape) {
            const T limit = std::sqrt(T(6) / static_cast<T>(shape[0] + shape[1]));
            return Parameter<T>(Tensor<T>::uniform(shape, rng, -limit, limit));
        };
        auto zeros = [](std::int64_t n) { return Parameter<T>(Tensor<T>::zeros({n})); };
        auto ones = [](std::int64_t n) { return Parameter<T>(Tensor<T>::full({n}, T(1))); };
        auto attn = [&](AttnParams<T>& a) {
            a.wq = xavier({d, d});
            a.bq = zeros(d);
            a.wk = xavier({d, d});
            a.bk = zeros(d);
            a.wv = xavier({d, d});
            a.bv = zeros(d);
            a.wo = xavier({d, d});
            a.bo = zeros(d);
        };
        s.patch_w = xavier({td, d});
        s.patch_b = zeros(d);
        s.enc.resize(static_cast<std::size_t>(cfg.layers_enc));
        for (auto& b : s.enc) {
            b.ln1_g = ones(d);
            b.ln1_b = zeros(d);
            attn(b.attn);
            b.ln2_g = ones(d);
            b.ln2_b = zeros(d);
            b.mlp_w1 = xavier({d, hd});
            b.mlp_b1 = zeros(hd);
            b.mlp_w2 = xavier({hd, d});
            b.mlp_b2 = zeros(d);
        }
        s.enc_ln_g = ones(d);
        s.enc_ln_b = zeros(d);
        s.dec.resize(static_cast<std::size_t>(cfg.layers_dec));
        for (auto& b : s.dec) {
            b.ln1_g = ones(d);
            b.ln1_b = zeros(d);
            attn(b.self_attn);
            b.ln2_g = ones(d);
            b.ln2_b = zeros(d);
            attn(b.cross_attn);
            b.ln3_g = ones(d);
            b.ln3_b = zeros(d);
            b.mlp_w1 = xavier({d, hd});
            b.mlp_b1 = zeros(hd);
            b.mlp_w2 = xavier({hd, d});
            b.mlp_b2 = zeros(d);
        }
        s.dec_ln_g = ones(d);
        s.dec_ln_b = zeros(d);
        s.skip_w = Parameter<T>(Tensor<T>::zeros({cfg.layers_dec, cfg.layers_enc}));
        for (int l = 0; l < cfg.layers_dec; ++l)
            s.skip_w.value.data[static_cast<std::size_t>(l * cfg.layers_enc + cfg.layers_enc - 1)] = T(1);
        s.query_w = xavier({d, d});
        s.query_b = zeros(d);
        s.head_w = xavier({d, td});
        s.head_b = zeros(td);
        s.pos = sincos_positions(cfg.grid_h, cfg.grid_w, cfg.dim).template cast<T>();
        return s;
    }

    // Visits every trainable parameter with a stable name.
    void for_each_param(const std::function<void(const std::string&, Parameter<T>&)>& fn) {
        fn("patch_w", patch_w);
        fn("patch_b", patch_b);
        for (std::size_t l = 0; l < enc.size(); ++l) {
            const std::string p = "enc." + std::to_string(l) + ".";
            auto& b = enc[l];
            fn(p + "ln1_g", b.ln1_g);
            fn(p + "ln1_b", b.ln1_b);
            fn(p + "attn.wq", b.attn.wq);
            fn(p + "attn.bq", b.attn.bq);
            fn(p + "attn.wk", b.attn.wk);
            fn(p + "attn.bk", b.attn.bk);
            fn(p + "attn.wv", b.attn.wv);
            fn(p + "attn.bv", b.attn.bv);
            fn(p + "attn.wo", b.attn.wo);
            fn(p + "attn.bo", b.attn.bo);
            fn(p + "ln2_g", b.ln2_g);
            fn(p + "ln2_b", b.ln2_b);
            fn(p + "mlp_w1", b.mlp_w1);
            fn(p + "mlp_b1", b.mlp_b1);
            fn(p + "mlp_w2", b.mlp_w2);
            fn(p + "mlp_b2", b.mlp_b2);
        }
        fn("enc_ln_g", enc_ln_g);
        fn("enc_ln_b", enc_ln_b);
        for (std::size_t l = 0; l < dec.size(); ++l) {
            const std::string p = "dec." + std::to_string(l) + ".";
            auto& b = dec[l];
            fn(p + "ln1_g", b.ln1_g);
            fn(p + "ln1_b", b.ln1_b);
            fn(p + "self.wq", b.self_attn.wq);
            fn(p + "self.bq", b.self_attn.bq);
            fn(p + "self.wk", b.self_attn.wk);
            fn(p + "self.bk", b.self_attn.bk);
            fn(p + "self.wv", b.self_attn.wv);
            fn(p + "self.bv", b.self_attn.bv);
            fn(p + "self.wo", b.self_attn.wo);
            fn(p + "self.bo", b.self_attn.bo);
            fn(p + "ln2_g", b.ln2_g);
            fn(p + "ln2_b", b.ln2_b);
            fn(p + "cross.wq", b.cross_attn.wq);
            fn(p + "cross.bq", b.cross_attn.bq);
            fn(p + "cross.wk", b.cross_attn.wk);
            fn(p + "cross.bk", b.cross_attn.bk);
            fn(p + "cross.wv", b.cross_attn.wv);
            fn(p + "cross.bv", b.cross_attn.bv);
            fn(p + "cross.wo", b.cross_attn.wo);
            fn(p + "cross.bo", b.cross_attn.bo);
            fn(p + "ln3_g", b.ln3_g);
            fn(p + "ln3_b", b.ln3_b);
            fn(p + "mlp_w1", b.mlp_w1);
            fn(p + "mlp_b1", b.mlp_b1);
            fn(p + "mlp_w2", b.mlp_w2);
            fn(p + "mlp_b2", b.mlp_b2);
        }
        fn("dec_ln_g", dec_ln_g);
        fn("dec_ln_b", dec_ln_b);
        fn("skip_w", skip_w);
        fn("query_w", query_w);
        fn("query_b", query_b);
        fn("head_w", head_w);
        fn("head_b", head_b);
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        for_each_param([&](const std::string&, Parameter<T>& p) { n += p.value.numel(); });
        return n;
    }

    void zero_grad() {
        for_each_param([](const std::string&, Parameter<T>& p) { p.zero_grad(); });
    }

    template <class U>
    ModelState<U> cast() {
        ModelState<U> out;
        out.cfg = cfg;
        Rng dummy(0);
        out = ModelState<U>::init(cfg, dummy);
        std::vector<Parameter<U>*> dst;
        out.for_each_param([&](const std::string&, Parameter<U>& p) { dst.push_back(&p); });
        std::size_t i = 0;
        for_each_param([&](const std::string&, Parameter<T>& p) { dst[i++]->value = p.value.template cast<U>(); });
        return out;
    }
};

namespace detail {

constexpr double kLnEps = 1e-6;

template <class T>
NodeId attn_sublayer(Graph<T>& g, NodeId x, const ModelConfig& cfg, AttnParams<T>& p, Parameter<T>& ln_g,
                     Parameter<T>& ln_b, const AttentionMask& mask, NodeId kv_source = -1) {
    NodeId y = g.layer_norm(x, g.param(ln_g), g.param(ln_b), T(kLnEps));
    NodeId kv = kv_source >= 0 ? kv_source : y;
    NodeId q = g.split_heads(g.linear(y, g.param(p.wq), g.param(p.bq)), cfg.heads);
    NodeId k = g.split_heads(g.linear(kv, g.param(p.wk), g.param(p.bk)), cfg.heads);
    NodeId v = g.split_heads(g.linear(kv, g.param(p.wv), g.param(p.bv)), cfg.heads);
    NodeId ctx = g.merge_heads(masked_attention(g, q, k, v, mask));
    NodeId out = g.linear(ctx, g.param(p.wo), g.param(p.bo));
    return g.add(x, out);
}

template <class T, class Block>
NodeId mlp_sublayer(Graph<T>& g, NodeId x, Block& b) {
    NodeId y = g.layer_norm(x, g.param(b.ln2_g), g.param(b.ln2_b), T(kLnEps));
    NodeId h = g.gelu(g.linear(y, g.param(b.mlp_w1), g.param(b.mlp_b1)));
    return g.add(x, g.linear(h, g.param(b.mlp_w2), g.param(b.mlp_b2)));
}

template <class T>
NodeId dec_mlp_sublayer(Graph<T>& g, NodeId x, DecBlock<T>& b) {
    NodeId y = g.layer_norm(x, g.param(b.ln3_g), g.param(b.ln3_b), T(kLnEps));
    NodeId h = g.gelu(g.linear(y, g.param(b.mlp_w1), g.param(b.mlp_b1)));
    return g.add(x, g.linear(h, g.param(b.mlp_w2), g.param(b.mlp_b2)));
}

}  // namespace detail

// Pre-norm masked encoder; returns the output node of every layer (the
// memory trace H^1..H^L_enc).
template <class T>
std::vector<NodeId> encode(Graph<T>& g, ModelState<T>& s, const Tensor<T>& tokens, const AttentionMask& source_mask) {
    if (tokens.rank() != 2 || tokens.shape[0] != s.cfg.num_tokens() || tokens.shape[1] != s.cfg.token_dim())
        throw ShapeError("encode: tokens " + shape_str(tokens.shape) + " do not match model config");
    NodeId x = g.add(g.linear(g.input(tokens), g.param(s.patch_w), g.param(s.patch_b)), g.input(s.pos));
    std::vector<NodeId> trace;
    trace.reserve(s.enc.size());
    for (auto& b : s.enc) {
        x = detail::attn_sublayer(g, x, s.cfg, b.attn, b.ln1_g, b.ln1_b, source_mask);
        x = detail::mlp_sublayer(g, x, b);
        trace.push_back(x);
    }
    return trace;
}

// Z^l = sum_k W[l,k] H^k, one memory per decoder layer. Gradients flow to W
// and to every encoder layer output.
template <class T>
std::vector<NodeId> skip_memory(Graph<T>& g, ModelState<T>& s, const std::vector<NodeId>& trace) {
    if (static_cast<int>(trace.size()) != s.cfg.layers_enc)
        throw ShapeError("skip_memory: trace length != layers_enc");
    NodeId w = g.param(s.skip_w);
    std::vector<NodeId> memories;
    for (int l = 0; l < s.cfg.layers_dec; ++l) memories.push_back(g.linear_mix(trace, w, l));
    return memories;
}

// Decoder over positional queries only (no pixel content enters here).
template <class T>
NodeId decode(Graph<T>& g, ModelState<T>& s, const std::vector<NodeId>& memories, const AttentionMask& self_mask,
              const AttentionMask& memory_mask) {
    if (static_cast<int>(memories.size()) != s.cfg.layers_dec) throw ShapeError("decode: one memory per decoder layer expected");
    NodeId x = g.linear(g.input(s.pos), g.param(s.query_w), g.param(s.query_b));
    for (std::size_t l = 0; l < s.dec.size(); ++l) {
        auto& b = s.dec[l];
        x = detail::attn_sublayer(g, x, s.cfg, b.self_attn, b.ln1_g, b.ln1_b, self_mask);
        x = detail::attn_sublayer(g, x, s.cfg, b.cross_attn, b.ln2_g, b.ln2_b, memory_mask, memories[l]);
        x = detail::dec_mlp_sublayer(g, x, b);
    }
    x = g.layer_norm(x, g.param(s.dec_ln_g), g.param(s.dec_ln_b), T(detail::kLnEps));
    return g.linear(x, g.param(s.head_w), g.param(s.head_b));
}

struct PretrainLossOptions {
    bool normalize_pixels = false;
    bool exclude_first_segment = false;
};

// Full pretraining objective of one sample; returns the scalar loss node.
template <class T>
NodeId forward_pretrain(Graph<T>& g, ModelState<T>& s, const TokenGrid& grid, const SegmentMap& map,
                        const SerializationOrder& order, const PretrainLossOptions& opt) {
    const Tensor<T> tokens = grid.tokens.template cast<T>();
    const AttentionMask source_mask = build_source_mask(map, order);
    const AttentionMask self_mask = build_decoder_self_mask(map, order);
    const AttentionMask memory_mask = build_memory_mask(map, order);
    auto trace = encode(g, s, tokens, source_mask);
    auto memories = skip_memory(g, s, trace);
    NodeId pred = decode(g, s, memories, self_mask, memory_mask);
    const Tensor<T> target =
        opt.normalize_pixels ? normalize_targets(grid).template cast<T>() : tokens;
    std::vector<T> weights;
    if (opt.exclude_first_segment) {
        const auto ranks = token_ranks(map, order);
        weights.resize(ranks.size());
        for (std::size_t i = 0; i < ranks.size(); ++i) weights[i] = ranks[i] == 0 ? T(0) : T(1);
    }
    return g.mse(pred, target, opt.exclude_first_segment ? &weights : nullptr);
}

// Trainable feature path for fine-tuning: unmasked encoder, final norm,
// mean pool. Returns the pooled [dim] node inside the caller's graph.
template <class T>
NodeId pooled_features_node(Graph<T>& g, ModelState<T>& s, const TokenGrid& grid) {
    const AttentionMask full = all_true_mask(s.cfg.num_tokens());
    auto trace = encode(g, s, grid.tokens.template cast<T>(), full);
    NodeId x = g.layer_norm(trace.back(), g.param(s.enc_ln_g), g.param(s.enc_ln_b), T(detail::kLnEps));
    return g.mean_rows(x);
}

// Unmasked encoder forward, mean over last-layer token features after the
// final norm. Ignores any segment map or order; consumes no randomness.
template <class T>
Tensor<T> extract_features(ModelState<T>& s, const TokenGrid& grid) {
    Graph<T> g;
    return g.value(pooled_features_node(g, s, grid));
}

}  // namespace randsac
