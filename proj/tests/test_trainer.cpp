#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "randsac/trainer.hpp"
#include "test_support.hpp"

using namespace randsac;
using randsac::testing::random_image;

TEST_CASE("learning rate schedule hits the hand-computed anchors") {
    // base 1e-3, batch 512 -> peak 2e-3 by the linear scaling rule.
    const double peak = 2e-3;
    CHECK(lr_at(0, 1e-3, 512, 100, 1000) == 0.0);
    CHECK(lr_at(100, 1e-3, 512, 100, 1000) == doctest::Approx(peak));
    CHECK(lr_at(50, 1e-3, 512, 100, 1000) == doctest::Approx(peak / 2));
    // Cosine midpoint: half the peak.
    CHECK(lr_at(550, 1e-3, 512, 100, 1000) == doctest::Approx(peak / 2));
    CHECK(lr_at(1000, 1e-3, 512, 100, 1000) == doctest::Approx(0.0));
    CHECK(lr_at(5000, 1e-3, 512, 100, 1000) == doctest::Approx(0.0));
}

TEST_CASE("schedule is continuous at the warmup boundary") {
    for (std::int64_t s = 95; s <= 105; ++s) {
        const double a = lr_at(s, 1e-3, 256, 100, 1000);
        const double b = lr_at(s + 1, 1e-3, 256, 100, 1000);
        CHECK(std::abs(a - b) < 2e-5);
    }
    CHECK_THROWS_AS(lr_at(-1, 1e-3, 256, 100, 1000), ConfigError);
}

TEST_CASE("zero warmup starts directly on the cosine") {
    CHECK(lr_at(0, 1e-3, 256, 0, 100) == doctest::Approx(1e-3));
}

TEST_CASE("optimizer with zero gradient only applies weight decay") {
    Parameter<float> w(Tensor<float>::full({2, 2}, 1.f));
    Parameter<float> b(Tensor<float>::full({2}, 1.f));
    w.zero_grad();
    b.zero_grad();
    AdamW<float> opt({0.1, 0.9, 0.999, 1e-8, 0.0});
    opt.step({{"w", &w}, {"b", &b}}, 0.5);
    // Biases are excluded from decay; with zero gradient they must not move.
    for (auto v : b.value.data) CHECK(v == 1.f);
    for (auto v : w.value.data) CHECK(v == doctest::Approx(1.f - 0.5 * 0.1 * 1.f));
}

TEST_CASE("first optimizer step moves by -lr * sign(gradient)") {
    Parameter<double> w(Tensor<double>({1, 2}, {0.0, 0.0}));
    w.zero_grad();
    w.grad.data = {3.0, -0.25};
    AdamW<double> opt({0.0, 0.9, 0.999, 1e-12, 0.0});
    opt.step({{"w", &w}}, 0.01);
    CHECK(w.value.data[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(w.value.data[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("optimizer drives a quadratic bowl to the minimum") {
    Parameter<double> w(Tensor<double>({1, 2}, {3.0, -2.0}));
    AdamW<double> opt({0.0, 0.9, 0.999, 1e-8, 0.0});
    for (int s = 0; s < 500; ++s) {
        w.zero_grad();
        // loss = (w0 - 1)^2 + (w1 + 1)^2
        w.grad.data[0] = 2 * (w.value.data[0] - 1.0);
        w.grad.data[1] = 2 * (w.value.data[1] + 1.0);
        opt.step({{"w", &w}}, 0.05);
    }
    CHECK(std::abs(w.value.data[0] - 1.0) < 1e-3);
    CHECK(std::abs(w.value.data[1] + 1.0) < 1e-3);
}

TEST_CASE("non-finite gradients raise divergence") {
    Parameter<float> w(Tensor<float>::full({2, 2}, 1.f));
    w.zero_grad();
    w.grad.data[0] = std::numeric_limits<float>::quiet_NaN();
    AdamW<float> opt({0.0, 0.9, 0.999, 1e-8, 0.0});
    CHECK_THROWS_AS(opt.step({{"w", &w}}, 0.1), DivergenceError);
}

TEST_CASE("gradient clipping caps the global norm") {
    Parameter<double> w(Tensor<double>({1, 2}, {0.0, 0.0}));
    w.zero_grad();
    w.grad.data = {30.0, 40.0};  // norm 50
    AdamW<double> opt({0.0, 0.9, 0.999, 1e-8, 5.0});
    opt.step({{"w", &w}}, 0.0);  // lr 0: only the clip mutates state we read
    CHECK(std::hypot(w.grad.data[0], w.grad.data[1]) == doctest::Approx(5.0));
    CHECK(w.grad.data[0] / w.grad.data[1] == doctest::Approx(0.75));
}

TEST_CASE("decay exclusion covers biases, gains, and skip weights") {
    CHECK(decay_applies("enc.0.attn.wq", 2));
    CHECK(decay_applies("patch_w", 2));
    CHECK_FALSE(decay_applies("enc.0.attn.bq", 1));
    CHECK_FALSE(decay_applies("enc_ln_g", 1));
    CHECK_FALSE(decay_applies("skip_w", 2));
}

TEST_CASE("augmentation keeps size, flips about half the time, stays in range") {
    Rng rng(60);
    Image img = random_image(rng, 16, 16, 3);
    int changed = 0;
    for (int t = 0; t < 200; ++t) {
        Image out = augment(rng, img);
        CHECK(out.h == 16);
        CHECK(out.w == 16);
        CHECK(out.c == 3);
        for (auto v : out.pix) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
        if (out.pix != img.pix) ++changed;
    }
    CHECK(changed > 190);
}

TEST_CASE("augmentation is a pure function of the stream state") {
    Rng a(61), b(61);
    Image img = random_image(a, 12, 12, 3);
    Image img2 = random_image(b, 12, 12, 3);
    CHECK(augment(a, img).pix == augment(b, img2).pix);
}

TEST_CASE("sample_task dispatches every partition and serialization kind") {
    TrainConfig cfg;
    Rng rng(62);
    cfg.partition = PartitionKind::per_token;
    cfg.serialization = SerialKind::raster;
    auto t1 = sample_task(rng, cfg, 4, 4);
    CHECK(t1.map.num_segments == 16);
    CHECK(t1.order.flattened() == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});

    cfg.partition = PartitionKind::square;
    cfg.square_m = 2;
    cfg.serialization = SerialKind::random_flat;
    auto t2 = sample_task(rng, cfg, 4, 4);
    CHECK(t2.map.num_segments == 4);
    t2.order.validate(4);

    cfg.partition = PartitionKind::blob;
    cfg.blob_k = 5;
    cfg.serialization = SerialKind::hierarchical;
    cfg.hierarchy = {3};
    auto t3 = sample_task(rng, cfg, 8, 8);
    CHECK(t3.map.num_segments >= 2);
    t3.order.validate(t3.map.num_segments);
}

TEST_CASE("hierarchy requests are clamped below the realized count") {
    TrainConfig cfg;
    cfg.partition = PartitionKind::square;
    cfg.square_m = 2;
    cfg.serialization = SerialKind::hierarchical;
    cfg.hierarchy = {100};  // clamps to K-1 = 3
    Rng rng(63);
    auto t = sample_task(rng, cfg, 4, 4);
    t.order.validate(4);
    // With 2 realized segments no coarser level fits: flat fallback.
    SegmentMap two;
    cfg.partition = PartitionKind::blob;
    cfg.blob_k = 2;
    auto t2 = sample_task(rng, cfg, 2, 2);
    t2.order.validate(t2.map.num_segments);
}

TEST_CASE("shuffle_tokens option fragments the partition") {
    TrainConfig cfg;
    cfg.partition = PartitionKind::square;
    cfg.square_m = 4;
    cfg.shuffle_tokens = true;
    Rng rng(64);
    auto t = sample_task(rng, cfg, 8, 8);
    CHECK(t.map.num_segments == 4);
    // A shuffled 4x4 block almost surely stops being one contiguous run.
    bool any_scattered = false;
    auto fibers = t.map.fibers();
    for (const auto& f : fibers)
        if (f.back() - f.front() + 1 != static_cast<int>(f.size())) any_scattered = true;
    CHECK(any_scattered);
}

TEST_CASE("config validation rejects bad ranges") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.warmup_epochs = cfg.total_epochs;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.hierarchy = {1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

namespace {

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.total_epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.base_lr = 1e-3;
    cfg.augment = false;
    cfg.partition = PartitionKind::square;
    cfg.square_m = 2;
    cfg.serialization = SerialKind::random_flat;
    return cfg;
}

ModelConfig micro_model_config() {
    ModelConfig mc;
    mc.dim = 16;
    mc.heads = 2;
    mc.layers_enc = 2;
    mc.layers_dec = 1;
    mc.mlp_ratio = 2;
    mc.patch = 2;
    mc.grid_h = 4;
    mc.grid_w = 4;
    mc.channels = 3;
    return mc;
}

std::vector<Image> tiny_images(int n) {
    Rng rng(70);
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) out.push_back(random_image(rng, 8, 8, 3));
    return out;
}

}  // namespace

TEST_CASE("pretraining is bitwise reproducible across runs") {
    auto run = [&]() {
        Rng rng(71);
        auto model = ModelState<float>::init(micro_model_config(), rng);
        auto result = pretrain(tiny_train_config(), tiny_images(8), model);
        std::vector<float> flat;
        model.for_each_param([&](const std::string&, Parameter<float>& p) {
            flat.insert(flat.end(), p.value.data.begin(), p.value.data.end());
        });
        return std::make_pair(result, flat);
    };
    auto [ra, pa] = run();
    auto [rb, pb] = run();
    CHECK(pa == pb);
    REQUIRE(ra.log.size() == rb.log.size());
    for (std::size_t i = 0; i < ra.log.size(); ++i) {
        CHECK(ra.log[i].loss == rb.log[i].loss);
        CHECK(ra.log[i].lr == rb.log[i].lr);
        CHECK(ra.log[i].wall_ms == 0.0);
    }
}

TEST_CASE("loss decreases when overfitting a handful of images") {
    Rng rng(72);
    auto model = ModelState<float>::init(micro_model_config(), rng);
    TrainConfig cfg = tiny_train_config();
    cfg.total_epochs = 40;
    cfg.warmup_epochs = 2;
    cfg.base_lr = 0.25;  // peak = base * 4 / 256 under the scaling rule
    cfg.batch_size = 4;
    auto result = pretrain(cfg, tiny_images(4), model);
    const double first = result.log.front().loss;
    CHECK(result.final_loss < 0.5 * first);
}

TEST_CASE("metrics CSV round-trips through the writer deterministically") {
    std::vector<StepMetrics> log = {{0, 0, 1e-3, 0.5, 0.0}, {1, 0, 2e-3, 0.25, 0.0}};
    const std::string path = "metrics_test.csv";
    write_metrics_csv(log, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "step,epoch,lr,loss,wall_ms");
    std::getline(f, line);
    CHECK(line == "0,0,0.001,0.5,0.000");
    std::getline(f, line);
    CHECK(line == "1,0,0.002,0.25,0.000");
    std::filesystem::remove(path);
}

TEST_CASE("pretrain writes a final checkpoint and metrics file") {
    Rng rng(73);
    auto model = ModelState<float>::init(micro_model_config(), rng);
    const std::string dir = "trainer_out_test";
    pretrain(tiny_train_config(), tiny_images(4), model, dir);
    CHECK(std::filesystem::exists(dir + "/checkpoints/ckpt_final.bin"));
    CHECK(std::filesystem::exists(dir + "/metrics.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("pretrain rejects an empty dataset") {
    Rng rng(74);
    auto model = ModelState<float>::init(micro_model_config(), rng);
    CHECK_THROWS_AS(pretrain(tiny_train_config(), {}, model), DataError);
}
