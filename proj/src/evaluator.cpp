#include "randsac/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "randsac/errors.hpp"
#include "randsac/optimizer.hpp"

namespace randsac {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty()) throw DataError("accuracy: empty input");
    if (predictions.size() != labels.size()) throw DataError("accuracy: length mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::vector<std::vector<float>> extract_all_features(ModelState<float>& model, const std::vector<Image>& images) {
    std::vector<std::vector<float>> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        const TokenGrid grid = patchify(img, model.cfg.patch);
        out.push_back(extract_features(model, grid).data);
    }
    return out;
}

namespace {

void require_all_classes(const Dataset& train) {
    std::vector<int> seen(static_cast<std::size_t>(train.num_classes), 0);
    for (int l : train.labels) seen[static_cast<std::size_t>(l)] = 1;
    for (int c = 0; c < train.num_classes; ++c)
        if (!seen[static_cast<std::size_t>(c)])
            throw ConfigError("probe: class " + std::to_string(c) + " absent from the training set");
}

int argmax_class(const std::vector<float>& logits) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<float> head_logits(const ProbeHead& head, const float* feat, int dim, int classes) {
    std::vector<float> logits(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        float v = head.b.value.data[static_cast<std::size_t>(c)];
        for (int j = 0; j < dim; ++j) v += feat[j] * head.w.value.data[static_cast<std::size_t>(j * classes + c)];
        logits[static_cast<std::size_t>(c)] = v;
    }
    return logits;
}

// Closed-form gradient of softmax cross-entropy through the linear head.
double head_backward(ProbeHead& head, const float* feat, int dim, int classes, int label) {
    auto logits = head_logits(head, feat, dim, classes);
    float mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (auto v : logits) sum += std::exp(static_cast<double>(v - mx));
    const double lse = std::log(sum) + mx;
    for (int c = 0; c < classes; ++c) {
        const float p = static_cast<float>(std::exp(logits[static_cast<std::size_t>(c)] - lse));
        const float d = p - (c == label ? 1.f : 0.f);
        head.b.grad.data[static_cast<std::size_t>(c)] += d;
        for (int j = 0; j < dim; ++j) head.w.grad.data[static_cast<std::size_t>(j * classes + c)] += d * feat[j];
    }
    return lse - logits[static_cast<std::size_t>(label)];
}

EvalReport evaluate_head(const ProbeHead& head, const std::vector<std::vector<float>>& features,
                         const std::vector<int>& labels, int classes) {
    std::vector<int> preds;
    preds.reserve(features.size());
    for (const auto& f : features) preds.push_back(argmax_class(head_logits(head, f.data(), static_cast<int>(f.size()), classes)));
    EvalReport report;
    report.top1 = accuracy(preds, labels);
    report.per_class.assign(static_cast<std::size_t>(classes), 0);
    std::vector<int> totals(static_cast<std::size_t>(classes), 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ++totals[static_cast<std::size_t>(labels[i])];
        if (preds[i] == labels[i]) report.per_class[static_cast<std::size_t>(labels[i])] += 1;
    }
    for (int c = 0; c < classes; ++c)
        if (totals[static_cast<std::size_t>(c)] > 0) report.per_class[static_cast<std::size_t>(c)] /= totals[static_cast<std::size_t>(c)];
    return report;
}

ProbeHead make_head(int dim, int classes, std::uint64_t seed) {
    Rng rng(hash_stream(seed, 0x48454144ull));
    const float limit = std::sqrt(6.f / static_cast<float>(dim + classes));
    ProbeHead head;
    head.w = Parameter<float>(Tensor<float>::uniform({dim, classes}, rng, -limit, limit));
    head.b = Parameter<float>(Tensor<float>::zeros({classes}));
    return head;
}

// Trains a linear head on fixed feature vectors.
void train_head(ProbeHead& head, const std::vector<std::vector<float>>& features, const std::vector<int>& labels,
                int classes, const EvalConfig& cfg) {
    const int n = static_cast<int>(features.size());
    const int dim = static_cast<int>(features.front().size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs;
    const std::int64_t warmup_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.warmup_epochs;
    AdamW<float> opt({cfg.weight_decay, 0.9, 0.999, 1e-8, 0});
    std::vector<std::pair<std::string, Parameter<float>*>> params{{"head_w", &head.w}, {"head_b", &head.b}};
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(hash_stream(cfg.seed, 0x50524f42ull, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        for (int s = 0; s < steps_per_epoch; ++s) {
            const int begin = s * cfg.batch_size;
            const int end = std::min(begin + cfg.batch_size, n);
            head.w.zero_grad();
            head.b.zero_grad();
            for (int i = begin; i < end; ++i) {
                const int idx = order[static_cast<std::size_t>(i)];
                head_backward(head, features[static_cast<std::size_t>(idx)].data(), dim, classes,
                              labels[static_cast<std::size_t>(idx)]);
            }
            const float inv_b = 1.f / static_cast<float>(end - begin);
            for (auto& g : head.w.grad.data) g *= inv_b;
            for (auto& g : head.b.grad.data) g *= inv_b;
            opt.step(params, lr_at(step, cfg.base_lr, cfg.batch_size, warmup_steps, total_steps));
            ++step;
        }
    }
}

}  // namespace

EvalReport linear_probe(ModelState<float>& model, const Dataset& train, const Dataset& test, const EvalConfig& cfg) {
    require_all_classes(train);
    const auto train_feats = extract_all_features(model, train.images);
    const auto test_feats = extract_all_features(model, test.images);
    ProbeHead head = make_head(model.cfg.dim, train.num_classes, cfg.seed);
    train_head(head, train_feats, train.labels, train.num_classes, cfg);
    return evaluate_head(head, test_feats, test.labels, train.num_classes);
}

EvalReport finetune(ModelState<float>& model, const Dataset& train, const Dataset& test, const EvalConfig& cfg) {
    require_all_classes(train);
    const int classes = train.num_classes;
    const int n = train.count();
    ProbeHead head = make_head(model.cfg.dim, classes, cfg.seed);

    std::vector<std::pair<std::string, Parameter<float>*>> params{{"probe_w", &head.w}, {"probe_b", &head.b}};
    model.for_each_param([&](const std::string& name, Parameter<float>& p) {
        // Decoder, skip weights, and query/head projections are unused here.
        if (name.rfind("dec", 0) == 0 || name == "skip_w" || name.rfind("query_", 0) == 0 ||
            name.rfind("head_", 0) == 0)
            return;
        params.emplace_back(name, &p);
    });

    // Layer-wise lr decay: top encoder layer at full lr, each layer below at
    // an extra factor, patch embedding at the bottom.
    const int layers = model.cfg.layers_enc;
    auto lr_scale = std::function<double(const std::string&)>([&](const std::string& name) -> double {
        if (name.rfind("probe_", 0) == 0 || name.rfind("enc_ln", 0) == 0) return 1.0;
        if (name.rfind("patch_", 0) == 0) return std::pow(cfg.layer_decay, layers);
        if (name.rfind("enc.", 0) == 0) {
            const int l = std::stoi(name.substr(4, name.find('.', 4) - 4));
            return std::pow(cfg.layer_decay, layers - 1 - l);
        }
        return 1.0;
    });

    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.epochs;
    const std::int64_t warmup_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.warmup_epochs;
    AdamW<float> opt({cfg.weight_decay, 0.9, 0.999, 1e-8, 0});
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(hash_stream(cfg.seed, 0x46544550ull, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (int s = 0; s < steps_per_epoch; ++s) {
            const int begin = s * cfg.batch_size;
            const int end = std::min(begin + cfg.batch_size, n);
            for (auto& [name, p] : params) p->zero_grad();
            for (int i = begin; i < end; ++i) {
                const int idx = order[static_cast<std::size_t>(i)];
                Rng rng(hash_stream(cfg.seed, static_cast<std::uint64_t>(epoch) | 0x4654ull << 32,
                                    static_cast<std::uint64_t>(idx)));
                const Image view = cfg.augment ? augment(rng, train.images[static_cast<std::size_t>(idx)])
                                               : train.images[static_cast<std::size_t>(idx)];
                const TokenGrid grid = patchify(view, model.cfg.patch);
                Graph<float> g;
                NodeId feat = pooled_features_node(g, model, grid);
                NodeId logits = g.linear(g.reshape_rowvec(feat), g.param(head.w), g.param(head.b));
                NodeId loss = g.softmax_cross_entropy(logits, train.labels[static_cast<std::size_t>(idx)]);
                g.backward(loss);
            }
            const float inv_b = 1.f / static_cast<float>(end - begin);
            for (auto& [name, p] : params)
                for (auto& g : p->grad.data) g *= inv_b;
            opt.step(params, lr_at(step, cfg.base_lr, cfg.batch_size, warmup_steps, total_steps), &lr_scale);
            ++step;
        }
    }

    const auto test_feats = extract_all_features(model, test.images);
    return evaluate_head(head, test_feats, test.labels, classes);
}

void append_result_row(const std::string& path, const std::string& header, const std::string& row) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream f(path, std::ios::app);
    if (!f) throw DataError("results: cannot open " + path);
    if (fresh) f << header << "\n";
    f << row << "\n";
}

}  // namespace randsac
