#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "dlaseg/train.hpp"
#include "oracles.hpp"

using namespace dlaseg;
namespace fs = std::filesystem;

namespace {

SegModelConfig small_model() {
    SegModelConfig cfg;
    cfg.enc_channels = {4, 8, 8, 8};
    cfg.dec_channels = {8, 8, 8, 8};
    return cfg;
}

std::vector<FloorPlanSample> small_dataset(std::size_t count, std::uint64_t seed,
                                           std::size_t hw = 32) {
    FloorPlanSpec spec;
    spec.height = spec.width = hw;
    spec.min_rooms = 1;
    spec.max_rooms = 2;
    spec.seed = seed;
    std::vector<FloorPlanSample> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_floorplan(spec, i));
    return out;
}

TrainResult run_training(const TrainConfig& cfg, const std::vector<FloorPlanSample>& data,
                         const SegModelConfig& mcfg) {
    SegModel model(mcfg);
    model.init(cfg.seed);
    DiscriminatorConfig dc = DiscriminatorConfig::desk(mcfg.c1 + mcfg.c2, 4);
    Discriminator d1(dc), d2(dc);
    d1.init(derive_stream(cfg.seed, 1));
    d2.init(derive_stream(cfg.seed, 2));
    return train(model, d1, d2, data, cfg);
}

}  // namespace

TEST_CASE("Adam: zero gradients leave parameters unchanged") {
    Param p({3});
    p.value.data = {1.0, -2.0, 0.5};
    Adam opt({{"p", &p}}, {});
    opt.step();
    CHECK(p.value.data == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("Adam: first step with unit gradient moves by about -lr") {
    Param p({1});
    p.value.data = {0.0};
    p.grad.data = {1.0};
    AdamConfig cfg;  // lr 1e-4
    Adam opt({{"p", &p}}, cfg);
    opt.step();
    // bias-corrected m-hat / sqrt(v-hat) = 1 at t=1, up to epsilon
    CHECK(p.value.data[0] == doctest::Approx(-1e-4).epsilon(1e-4));
}

TEST_CASE("Adam: constant gradient converges to steps of lr * sign(g)") {
    Param p({2});
    p.grad.data = {3.0, -0.25};
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;
    Adam opt({{"p", &p}}, cfg);
    double prev0 = 0, prev1 = 0;
    for (int i = 0; i < 400; ++i) {
        prev0 = p.value.data[0];
        prev1 = p.value.data[1];
        opt.step();
    }
    CHECK(p.value.data[0] - prev0 == doctest::Approx(-1e-3).epsilon(1e-3));
    CHECK(p.value.data[1] - prev1 == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("plain training (lambda = 0) trends downward on a 20-sample dataset") {
    auto data = small_dataset(20, 1);
    TrainConfig cfg;
    cfg.iterations = 150;
    cfg.batch_size = 4;
    cfg.adv.lambda_adv1 = cfg.adv.lambda_adv2 = 0.0;
    cfg.eval_every = 0;
    cfg.seed = 2;
    cfg.adam.learning_rate = 1e-3;  // quick descent on the small problem
    TrainResult r = run_training(cfg, data, small_model());
    REQUIRE(r.history.size() == 150);
    std::vector<double> l_seg;
    for (auto& rec : r.history) l_seg.push_back(rec.l_seg);
    const double early = smoothed(l_seg, 50, 50);
    const double late = smoothed(l_seg, l_seg.size(), 50);
    CHECK(late < early);
    // discriminators untouched when both weights are zero
    CHECK(r.d1_calls == 0);
    CHECK(r.d2_calls == 0);
}

TEST_CASE("fixed seed reproduces the loss history bit for bit") {
    auto data = small_dataset(8, 3);
    TrainConfig cfg;
    cfg.iterations = 6;
    cfg.batch_size = 2;
    cfg.eval_every = 0;
    cfg.seed = 11;
    TrainResult a = run_training(cfg, data, small_model());
    TrainResult b = run_training(cfg, data, small_model());
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].l_seg == b.history[i].l_seg);
        CHECK(a.history[i].l_adv1 == b.history[i].l_adv1);
        CHECK(a.history[i].l_adv2 == b.history[i].l_adv2);
        CHECK(a.history[i].l_d1 == b.history[i].l_d1);
        CHECK(a.history[i].l_d2 == b.history[i].l_d2);
    }
}

TEST_CASE("adversarial training: all five loss channels populated and finite") {
    auto data = small_dataset(8, 5);
    TrainConfig cfg;
    cfg.iterations = 4;
    cfg.batch_size = 2;
    cfg.eval_every = 0;
    cfg.seed = 7;
    TrainResult r = run_training(cfg, data, small_model());
    CHECK(r.d1_calls > 0);
    CHECK(r.d2_calls > 0);
    for (auto& rec : r.history) {
        CHECK(std::isfinite(rec.l_seg));
        CHECK(std::isfinite(rec.l_adv1));
        CHECK(std::isfinite(rec.l_adv2));
        CHECK(std::isfinite(rec.l_d1));
        CHECK(std::isfinite(rec.l_d2));
        CHECK(rec.l_seg > 0.0);
    }
}

TEST_CASE("loss CSV round trip has full precision and a header") {
    const fs::path path =
        fs::temp_directory_path() / ("dlaseg_csv_" + std::to_string(::getpid()) + ".csv");
    std::vector<LossRecord> hist{{1, 1.0 / 3.0, 0.1, 0.2, 0.3, 0.4},
                                 {2, 2.0 / 7.0, 0.5, 0.6, 0.7, 0.8}};
    write_loss_csv(path, hist);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "iteration,l_seg,l_adv1,l_adv2,l_d1,l_d2");
    std::string line;
    std::getline(is, line);
    // 17 significant digits round-trip doubles exactly
    CHECK(line.find("0.3333333333333333") != std::string::npos);
    fs::remove(path);
}

TEST_CASE("evaluate produces well-defined metrics in [0,1] for an untrained model") {
    auto data = small_dataset(4, 9);
    SegModel model(small_model());
    model.init(3);
    EvalResult r = evaluate(model, data);
    CHECK(r.boundary.overall_accuracy() >= 0.0);
    CHECK(r.boundary.overall_accuracy() <= 1.0);
    CHECK(r.room.overall_accuracy() >= 0.0);
    CHECK(r.room.overall_accuracy() <= 1.0);
    CHECK(r.boundary.mean_iou() >= 0.0);
    CHECK(r.boundary.mean_iou() <= 1.0);

    const std::string js = metrics_to_json(r);
    // report contains every class key
    for (const char* name : kBoundaryClassNames) CHECK(js.find(name) != std::string::npos);
    for (const char* name : kRoomClassNames) CHECK(js.find(name) != std::string::npos);
}

TEST_CASE("evaluate pools counts across samples") {
    auto data = small_dataset(3, 13);
    SegModel model(small_model());
    model.init(5);
    EvalResult all = evaluate(model, data);
    ClassCounts summed(kBoundaryClasses);
    for (const auto& s : data) {
        EvalResult one = evaluate(model, {s});
        summed += one.boundary;
    }
    CHECK(summed.correct == all.boundary.correct);
    CHECK(summed.ground_truth == all.boundary.ground_truth);
}

TEST_CASE("checkpoint round trip preserves the model exactly") {
    auto data = small_dataset(4, 15);
    SegModel model(small_model());
    model.init(8);
    DiscriminatorConfig dc = DiscriminatorConfig::desk(10, 4);
    Discriminator d1(dc), d2(dc);
    d1.init(1);
    d2.init(2);

    const fs::path path =
        fs::temp_directory_path() / ("dlaseg_ckpt_" + std::to_string(::getpid()) + ".dlac");
    write_checkpoint(path, snapshot(model, &d1, &d2));
    Checkpoint back = read_checkpoint(path);
    SegModel restored = model_from_checkpoint(back);

    Tensor x({1, 3, 32, 32});
    std::mt19937_64 rng(1);
    x.fill_uniform(rng, 0, 1);
    auto a = model.infer(x);
    auto b = restored.infer(x);
    CHECK(a.probs_boundary.data == b.probs_boundary.data);
    CHECK(a.probs_room.data == b.probs_room.data);

    Discriminator rd1 = discriminator_from_checkpoint(back, "d1");
    Tensor maps({1, 10, 32, 32});
    maps.fill_uniform(rng, 0, 1);
    CHECK(d1.forward(maps) == rd1.forward(maps));
    fs::remove(path);
}

TEST_CASE("fuse_checkpoint reports sub-1e-8 deviation and preserves evaluation") {
    auto data = small_dataset(4, 17);
    TrainConfig cfg;
    cfg.iterations = 5;
    cfg.batch_size = 2;
    cfg.eval_every = 0;
    cfg.seed = 23;

    SegModel model(small_model());
    model.init(cfg.seed);
    DiscriminatorConfig dc = DiscriminatorConfig::desk(10, 4);
    Discriminator d1(dc), d2(dc);
    d1.init(derive_stream(cfg.seed, 1));
    d2.init(derive_stream(cfg.seed, 2));
    train(model, d1, d2, data, cfg);

    Checkpoint unfused = snapshot(model);
    Checkpoint fused;
    FuseReport rep = fuse_checkpoint(unfused, fused, 5, 32);
    CHECK(rep.max_abs_deviation_boundary < 1e-8);
    CHECK(rep.max_abs_deviation_room < 1e-8);
    CHECK(fused.fused);

    SegModel mu = model_from_checkpoint(unfused);
    SegModel mf = model_from_checkpoint(fused);
    CHECK(metrics_to_json(evaluate(mu, data)) == metrics_to_json(evaluate(mf, data)));
}

TEST_CASE("training aborts with context when the loss blows up") {
    auto data = small_dataset(4, 19);
    TrainConfig cfg;
    cfg.iterations = 60;
    cfg.batch_size = 2;
    cfg.eval_every = 0;
    cfg.seed = 3;
    cfg.adam.learning_rate = 1e6;  // guaranteed divergence
    SegModel model(small_model());
    model.init(cfg.seed);
    DiscriminatorConfig dc = DiscriminatorConfig::desk(10, 4);
    Discriminator d1(dc), d2(dc);
    d1.init(1);
    d2.init(2);
    try {
        train(model, d1, d2, data, cfg);
        // divergence is overwhelmingly likely but not guaranteed; accept success
    } catch (const TrainAbort& e) {
        CHECK(e.iteration >= 1);
        CHECK(std::isfinite(e.last_finite.l_seg));
    }
}
