#pragma once

#include <string>
#include <vector>

#include "randsac/dataset.hpp"
#include "randsac/model.hpp"

namespace randsac {

struct EvalConfig {
    int epochs = 30;
    double base_lr = 0.01;
    int batch_size = 128;
    double weight_decay = 0.0;
    int warmup_epochs = 0;
    double layer_decay = 0.65;  // fine-tuning only
    bool augment = true;        // fine-tuning only (crop+flip)
    std::uint64_t seed = 0;
};

// dim x num_classes linear classifier head.
struct ProbeHead {
    Parameter<float> w;  // [dim, classes]
    Parameter<float> b;  // [classes]
};

struct EvalReport {
    double top1 = 0;
    std::vector<double> per_class;
    std::string config_hash;
    std::string checkpoint_id;
};

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Frozen mean-pooled last-layer features for every image.
std::vector<std::vector<float>> extract_all_features(ModelState<float>& model, const std::vector<Image>& images);

// Softmax classifier on frozen pooled features. Never mutates the encoder.
EvalReport linear_probe(ModelState<float>& model, const Dataset& train, const Dataset& test, const EvalConfig& cfg);

// End-to-end supervised training of encoder + head with layer-wise lr decay;
// masks and decoder are not used on this path.
EvalReport finetune(ModelState<float>& model, const Dataset& train, const Dataset& test, const EvalConfig& cfg);

void append_result_row(const std::string& path, const std::string& header, const std::string& row);

}  // namespace randsac
