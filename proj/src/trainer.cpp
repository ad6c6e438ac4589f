#include "randsac/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include "randsac/checkpoint.hpp"
#include "randsac/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace randsac {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (total_epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs >= total_epochs)
        throw ConfigError("train: warmup_epochs must lie in [0, epochs)");
    if (partition == PartitionKind::blob && blob_k < 2) throw ConfigError("train: blob_k must be >= 2");
    for (std::size_t i = 0; i < hierarchy.size(); ++i)
        if (hierarchy[i] < 2) throw ConfigError("train: hierarchy counts must be >= 2");
}

SampledTask sample_task(Rng& rng, const TrainConfig& cfg, int grid_h, int grid_w) {
    SampledTask task;
    const auto coords = token_coordinates(grid_h, grid_w);
    switch (cfg.partition) {
        case PartitionKind::per_token: {
            task.map.num_segments = grid_h * grid_w;
            task.map.assignment.resize(static_cast<std::size_t>(grid_h) * grid_w);
            std::iota(task.map.assignment.begin(), task.map.assignment.end(), 0);
            break;
        }
        case PartitionKind::square:
            task.map = square_partition(grid_h, grid_w, cfg.square_m);
            break;
        case PartitionKind::blob:
            task.map = sample_blob_partition(rng, cfg.blob_k, coords, cfg.strict_blob);
            break;
    }
    if (cfg.shuffle_tokens) task.map = shuffle_coherence(rng, task.map);
    switch (cfg.serialization) {
        case SerialKind::raster:
            task.order = raster_order(task.map);
            break;
        case SerialKind::random_flat:
            task.order = random_flat_order(rng, task.map.num_segments);
            break;
        case SerialKind::hierarchical: {
            // Level counts are realized counts; requested coarser levels are
            // clamped strictly below the level above. Falls back to a flat
            // shuffle when fewer than 3 segments are realized.
            std::vector<int> levels{task.map.num_segments};
            for (int req : cfg.hierarchy) {
                const int clamped = std::min(req, levels.back() - 1);
                if (clamped < 2) break;
                levels.push_back(clamped);
            }
            if (levels.size() < 2)
                task.order = random_flat_order(rng, task.map.num_segments);
            else
                task.order = hierarchical_order(rng, task.map, coords, levels);
            break;
        }
    }
    return task;
}

void write_metrics_csv(const std::vector<StepMetrics>& log, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("metrics: cannot open " + path);
    f << "step,epoch,lr,loss,wall_ms\n";
    char buf[160];
    for (const auto& m : log) {
        std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g,%.9g,%.3f\n", static_cast<long long>(m.step), m.epoch, m.lr,
                      m.loss, m.wall_ms);
        f << buf;
    }
}

PretrainResult pretrain(const TrainConfig& cfg, const std::vector<Image>& images, ModelState<float>& model,
                        const std::string& out_dir, std::ostream* progress) {
    cfg.validate();
    if (images.empty()) throw DataError("pretrain: empty dataset");
    openblas_set_num_threads(1);

    const int n = static_cast<int>(images.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.total_epochs;
    const std::int64_t warmup_steps = static_cast<std::int64_t>(steps_per_epoch) * cfg.warmup_epochs;

    AdamW<float> opt({cfg.weight_decay, cfg.beta1, cfg.beta2, 1e-8, cfg.grad_clip});
    std::vector<std::pair<std::string, Parameter<float>*>> params;
    model.for_each_param([&](const std::string& name, Parameter<float>& p) { params.emplace_back(name, &p); });

    PretrainLossOptions loss_opt{cfg.norm_pix_loss, cfg.exclude_first_segment};
    PretrainResult result;
    std::int64_t global_step = 0;
    double realized_k_sum = 0;
    std::int64_t realized_k_count = 0;

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir + "/checkpoints");

    for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng epoch_rng(hash_stream(cfg.seed, 0x45504f43ull, static_cast<std::uint64_t>(epoch)));
        epoch_rng.shuffle(order);

        for (int s = 0; s < steps_per_epoch; ++s) {
            const auto t0 = std::chrono::steady_clock::now();
            const int begin = s * cfg.batch_size;
            const int end = std::min(begin + cfg.batch_size, n);
            model.zero_grad();
            double loss_sum = 0;
            for (int bi = begin; bi < end; ++bi) {
                const int idx = order[static_cast<std::size_t>(bi)];
                // Per-sample stream: worker parallelism cannot change draws.
                Rng rng(hash_stream(cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)));
                const Image view = cfg.augment ? augment(rng, images[static_cast<std::size_t>(idx)])
                                               : images[static_cast<std::size_t>(idx)];
                const TokenGrid grid = patchify(view, model.cfg.patch);
                SampledTask task = sample_task(rng, cfg, grid.grid_h, grid.grid_w);
                realized_k_sum += task.map.num_segments;
                ++realized_k_count;
                Graph<float> g;
                const NodeId loss = forward_pretrain(g, model, grid, task.map, task.order, loss_opt);
                const double lv = g.value(loss).data[0];
                if (!std::isfinite(lv))
                    throw DivergenceError("pretrain: non-finite loss at step " + std::to_string(global_step));
                loss_sum += lv;
                g.backward(loss);
            }
            const int batch_n = end - begin;
            const float inv_b = 1.0f / static_cast<float>(batch_n);
            for (auto& [name, p] : params)
                for (auto& gv : p->grad.data) gv *= inv_b;
            const double lr = lr_at(global_step, cfg.base_lr, cfg.batch_size, warmup_steps, total_steps);
            opt.step(params, lr);
            const double wall =
                cfg.deterministic
                    ? 0.0
                    : std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            result.log.push_back({global_step, epoch, lr, loss_sum / batch_n, wall});
            ++global_step;
        }
        if (progress) {
            (*progress) << "epoch " << epoch << " loss " << result.log.back().loss << " lr " << result.log.back().lr
                        << "\n";
            progress->flush();
        }
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(model, out_dir + "/checkpoints/ckpt_epoch" + std::to_string(epoch + 1) + ".bin");
    }

    result.final_loss = result.log.empty() ? 0 : result.log.back().loss;
    result.mean_realized_k = realized_k_count ? realized_k_sum / static_cast<double>(realized_k_count) : 0;
    if (!out_dir.empty()) {
        save_checkpoint(model, out_dir + "/checkpoints/ckpt_final.bin");
        write_metrics_csv(result.log, out_dir + "/metrics.csv");
    }
    return result;
}

}  // namespace randsac
