#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "randsac/dataset.hpp"
#include "randsac/model.hpp"
#include "randsac/optimizer.hpp"

namespace randsac {

enum class PartitionKind { per_token, square, blob };
enum class SerialKind { raster, random_flat, hierarchical };

struct TrainConfig {
    double base_lr = 1e-3;
    int batch_size = 64;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int warmup_epochs = 10;
    int total_epochs = 100;
    std::uint64_t seed = 0;
    bool norm_pix_loss = false;
    bool exclude_first_segment = false;
    double grad_clip = 0.0;
    bool augment = true;

    PartitionKind partition = PartitionKind::per_token;
    int square_m = 2;
    int blob_k = 5;
    bool strict_blob = false;
    bool shuffle_tokens = false;
    SerialKind serialization = SerialKind::random_flat;
    std::vector<int> hierarchy;  // requested group counts below K, e.g. {3} for 7->3

    bool deterministic = true;
    int checkpoint_every = 0;  // epochs; 0 = final only

    void validate() const;
};

struct StepMetrics {
    std::int64_t step;
    int epoch;
    double lr;
    double loss;
    double wall_ms;
};

struct PretrainResult {
    std::vector<StepMetrics> log;
    double final_loss = 0;
    // Mean realized segment count over sampled partitions (for reports).
    double mean_realized_k = 0;
};

// Per-sample partition + serialization draw, shared by trainer and dumps.
struct SampledTask {
    SegmentMap map;
    SerializationOrder order;
};
SampledTask sample_task(Rng& rng, const TrainConfig& cfg, int grid_h, int grid_w);

// Pretraining loop. Mutates `model`; writes a metrics CSV and periodic
// checkpoints under out_dir when non-empty. Emits one log line per epoch to
// `progress` when given.
PretrainResult pretrain(const TrainConfig& cfg, const std::vector<Image>& images, ModelState<float>& model,
                        const std::string& out_dir = "", std::ostream* progress = nullptr);

void write_metrics_csv(const std::vector<StepMetrics>& log, const std::string& path);

}  // namespace randsac
