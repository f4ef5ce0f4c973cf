// Acceptance gate: one pass/fail line per criterion, exit 0 only if all pass.
//
// The heavyweight shared artifacts (the 500-iteration training run and its
// repeat) are computed once and reused across criteria 9, 10 and 11.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "dlaseg/render.hpp"
#include "dlaseg/train.hpp"
#include "oracles.hpp"

using namespace dlaseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Gate {
    int failures = 0;

    void report(int criterion, bool pass, const std::string& detail) {
        std::printf("%s criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion,
                    detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

ConvKernel random_kernel(std::mt19937_64& rng, std::size_t d, std::size_t c,
                         std::size_t kh, std::size_t kw) {
    ConvKernel k;
    k.weights = Tensor({d, c, kh, kw});
    k.weights.fill_normal(rng, 0.7);
    k.bias.resize(d);
    for (auto& b : k.bias) b = draw_uniform(rng, -1, 1);
    k.pad_h = kh / 2;
    k.pad_w = kw / 2;
    k.stride = 1;
    return k;
}

BatchNormParams random_bn(std::mt19937_64& rng, std::size_t channels) {
    BatchNormParams p;
    for (std::size_t c = 0; c < channels; ++c) {
        p.mean.push_back(draw_uniform(rng, -1, 1));
        p.std.push_back(draw_uniform(rng, 0.5, 2));
        p.scale.push_back(draw_uniform(rng, 0.5, 2));
        p.shift.push_back(draw_uniform(rng, -1, 1));
    }
    return p;
}

double weighted_sum(const Tensor& y, const Tensor& lw) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * lw.data[i];
    return s;
}

// --- criterion 1: fusion soundness over randomized inception blocks --------
void criterion_fusion(Gate& gate) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t in_c = 1 + rng() % 4, out_c = 1 + rng() % 4;
        ConvKernel b3 = random_kernel(rng, out_c, in_c, 3, 3);
        ConvKernel br = random_kernel(rng, out_c, in_c, 1, 3);
        ConvKernel bc = random_kernel(rng, out_c, in_c, 3, 1);
        DLAKernel dk(out_c, in_c);
        dk.init(rng);
        for (auto& b : dk.bias) b = draw_uniform(rng, -1, 1);
        ConvKernel bd = materialize(dk);

        Tensor x({2, in_c, 4 + rng() % 8, 4 + rng() % 8});
        x.fill_uniform(rng, -1, 1);
        Tensor sum = conv2d(x, b3);
        sum += conv2d(x, br);
        sum += conv2d(x, bc);
        sum += conv2d(x, bd);
        Tensor fused = conv2d(x, branch_additivity_fuse({b3, br, bc, bd}));
        worst = std::max(worst, oracle::max_abs_diff(sum, fused));
    }
    const double dt = seconds_since(t0);
    gate.report(1, worst < 1e-10 && dt < 10.0,
                "fusion soundness: max abs deviation " + std::to_string(worst) + " (< 1e-10), " +
                    std::to_string(dt) + " s (< 10 s)");
}

// --- criterion 2: BN-fold soundness ----------------------------------------
void criterion_fold(Gate& gate) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(102);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t in_c = 1 + rng() % 4, out_c = 1 + rng() % 4;
        ConvKernel k = random_kernel(rng, out_c, in_c, 3, 3);
        BatchNormParams p = random_bn(rng, out_c);
        Tensor x({2, in_c, 4 + rng() % 8, 4 + rng() % 8});
        x.fill_uniform(rng, -1, 1);
        Tensor unfolded = batchnorm(conv2d(x, k), p);
        Tensor folded = conv2d(x, fold_batchnorm(k, p));
        worst = std::max(worst, oracle::max_abs_diff(unfolded, folded));
    }
    const double dt = seconds_since(t0);
    gate.report(2, worst < 1e-10 && dt < 10.0,
                "BN-fold soundness: max abs deviation " + std::to_string(worst) +
                    " (< 1e-10), " + std::to_string(dt) + " s (< 10 s)");
}

// --- criterion 3: network-scope fused equivalence ---------------------------
void criterion_network_fuse(Gate& gate, const std::vector<FloorPlanSample>& warmup) {
    const auto t0 = Clock::now();
    SegModel model(SegModelConfig{});
    model.init(33);
    // a few optimizer-free training forwards move the BN statistics off init
    for (int i = 0; i < 3; ++i) {
        Tensor batch({2, 3, 64, 64});
        for (int b = 0; b < 2; ++b) {
            const auto& s = warmup[(i * 2 + b) % warmup.size()];
            std::copy(s.image.data.begin(), s.image.data.end(),
                      batch.data.begin() + b * s.image.size());
        }
        model.forward(batch, true);
    }

    Checkpoint unfused = snapshot(model);
    Checkpoint fused;
    FuseReport rep = fuse_checkpoint(unfused, fused, 10, 64);
    const double dev = std::max(rep.max_abs_deviation_boundary, rep.max_abs_deviation_room);

    SegModel mu = model_from_checkpoint(unfused);
    SegModel mf = model_from_checkpoint(fused);
    std::vector<FloorPlanSample> eval_set(warmup.begin(), warmup.begin() + 5);
    const bool json_equal =
        metrics_to_json(evaluate(mu, eval_set)) == metrics_to_json(evaluate(mf, eval_set));

    const double dt = seconds_since(t0);
    gate.report(3, dev < 1e-8 && json_equal && dt < 60.0,
                "network fused equivalence: max abs deviation " + std::to_string(dev) +
                    " (< 1e-8), metric JSONs " + (json_equal ? "identical" : "DIFFER") +
                    ", " + std::to_string(dt) + " s (< 60 s)");
}

// --- criterion 4: gradient correctness for every layer type -----------------
void criterion_gradients(Gate& gate) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(104);
    double worst = 0.0;
    std::string worst_at = "none";
    auto note = [&](const std::string& where, double err) {
        if (err > worst) {
            worst = err;
            worst_at = where;
        }
    };
    // probe with two step sizes: skip when they disagree (an activation kink
    // sits inside the window), otherwise score against the closer estimate
    auto note_fd = [&](const std::string& where, std::vector<double>& v, std::size_t i,
                       const std::function<double()>& f, double got) {
        const double a = oracle::central_diff(v, i, f, 1e-6);
        const double b = oracle::central_diff(v, i, f, 1e-7);
        const double denom = std::max({std::abs(a), std::abs(b), 1e-4});
        if (std::abs(a - b) / denom >= 1e-2) return;
        // the larger step trades truncation error for far less roundoff,
        // which matters for gradients near the noise floor
        const double c = oracle::central_diff(v, i, f, 1e-5);
        note(where, std::min({oracle::rel_err(got, a), oracle::rel_err(got, b),
                              oracle::rel_err(got, c)}));
    };

    // conv 1x3 / 3x1 / 3x3 (masked and dense), DLA branch
    struct ConvCase {
        WeightPattern pat;
        const char* name;
    };
    for (const ConvCase& cc : {ConvCase{WeightPattern::middle_row, "conv1x3"},
                               ConvCase{WeightPattern::middle_col, "conv3x1"},
                               ConvCase{WeightPattern::dense, "conv3x3"}}) {
        Conv2dLayer conv(2, 2, 3, 3, 1, 1, 1, true, cc.pat);
        conv.init(rng);
        Tensor x({1, 2, 5, 5});
        x.fill_uniform(rng, -1, 1);
        Tensor lw({1, 2, 5, 5});
        lw.fill_uniform(rng, -1, 1);
        auto loss = [&]() { return weighted_sum(conv.infer(x), lw); };
        conv.forward(x);
        Tensor gi = conv.backward(lw);
        std::vector<NamedParam> ps;
        conv.collect_params(cc.name, ps);
        for (auto& np : ps)
            for (std::size_t i = 0; i < np.param->value.size(); i += 2) {
                // masked positions carry no gradient by design
                if (np.param->value.data[i] == 0.0 && np.param->grad.data[i] == 0.0) continue;
                note(np.name, oracle::rel_err(np.param->grad.data[i],
                                              oracle::central_diff(np.param->value.data, i, loss)));
            }
        for (std::size_t i = 0; i < x.size(); i += 5)
            note(std::string(cc.name) + ".input",
                 oracle::rel_err(gi.data[i], oracle::central_diff(x.data, i, loss)));
    }

    {
        DLABranchLayer dla(2, 2, 1, true);
        dla.init(rng);
        Tensor x({1, 2, 5, 5});
        x.fill_uniform(rng, -1, 1);
        Tensor lw({1, 2, 5, 5});
        lw.fill_uniform(rng, -1, 1);
        auto loss = [&]() { return weighted_sum(dla.infer(x), lw); };
        dla.forward(x);
        dla.backward(lw);
        std::vector<NamedParam> ps;
        dla.collect_params("dla", ps);
        for (auto& np : ps)
            for (std::size_t i = 0; i < np.param->value.size(); ++i)
                note(np.name, oracle::rel_err(np.param->grad.data[i],
                                              oracle::central_diff(np.param->value.data, i, loss)));
    }

    {
        BatchNormLayer bn(2);
        Tensor x({2, 2, 3, 3});
        x.fill_uniform(rng, -1, 1);
        Tensor lw(x.dims);
        lw.fill_uniform(rng, -1, 1);
        std::vector<NamedParam> ps;
        bn.collect_params("bn", ps);
        ps[0].param->value.data = {1.2, 0.8};
        ps[1].param->value.data = {0.1, -0.2};
        auto loss = [&]() {
            BatchNormLayer probe(2);
            std::vector<NamedParam> pp;
            probe.collect_params("p", pp);
            pp[0].param->value = ps[0].param->value;
            pp[1].param->value = ps[1].param->value;
            return weighted_sum(probe.forward(x, true), lw);
        };
        bn.forward(x, true);
        Tensor gi = bn.backward(lw);
        for (auto& np : ps)
            for (std::size_t i = 0; i < np.param->value.size(); ++i)
                note(np.name, oracle::rel_err(np.param->grad.data[i],
                                              oracle::central_diff(np.param->value.data, i, loss)));
        for (std::size_t i = 0; i < x.size(); ++i)
            note("bn.input", oracle::rel_err(gi.data[i], oracle::central_diff(x.data, i, loss)));
    }

    // activations through a composition
    for (Activation a : {Activation::relu, Activation::leaky_relu, Activation::sigmoid,
                         Activation::softmax_channels}) {
        Tensor x({1, 3, 2, 2});
        x.fill_uniform(rng, 0.2, 1.2);
        Tensor lw(x.dims);
        lw.fill_uniform(rng, -1, 1);
        auto loss = [&]() { return weighted_sum(activate(x, a, 0.2), lw); };
        Tensor y = activate(x, a, 0.2);
        Tensor g = activate_backward(x, y, lw, a, 0.2);
        for (std::size_t i = 0; i < x.size(); ++i)
            note("activation", oracle::rel_err(g.data[i], oracle::central_diff(x.data, i, loss)));
    }

    // discriminator with residual blocks (includes a width-doubling block)
    {
        Discriminator d(DiscriminatorConfig::desk(3, 4));
        d.init(11);
        Tensor x({2, 3, 8, 8});
        x.fill_uniform(rng, 0, 1);
        const std::vector<double> lw{0.9, -0.6};
        auto loss = [&]() {
            std::vector<double> s = d.forward(x);
            return lw[0] * s[0] + lw[1] * s[1];
        };
        d.forward(x);
        d.zero_grad();
        Tensor gi = d.backward(lw);
        for (auto& np : d.params()) {
            const std::size_t stride = std::max<std::size_t>(1, np.param->value.size() / 6);
            for (std::size_t i = 0; i < np.param->value.size(); i += stride)
                note_fd("disc." + np.name, np.param->value.data, i, loss,
                        np.param->grad.data[i]);
        }
        for (std::size_t i = 0; i < x.size(); i += 17)
            note_fd("disc.input", x.data, i, loss, gi.data[i]);
    }

    // both decoders (and the context gates) inside a tiny end-to-end model
    {
        SegModelConfig cfg;
        cfg.enc_channels = {2, 2, 2, 2};
        cfg.dec_channels = {2, 2, 2, 2};
        SegModel model(cfg);
        model.init(5);
        // 32x32 keeps the bottleneck at 2x2 so batch statistics stay non-degenerate
        Tensor x({1, 3, 32, 32});
        x.fill_uniform(rng, 0, 1);
        Tensor lwb({1, 3, 32, 32}), lwr({1, 7, 32, 32});
        lwb.fill_uniform(rng, -1, 1);
        lwr.fill_uniform(rng, -1, 1);
        auto loss = [&]() {
            auto out = model.forward(x, true);
            return weighted_sum(out.probs_boundary, lwb) + weighted_sum(out.probs_room, lwr);
        };
        model.forward(x, true);
        model.zero_grad();
        model.backward(lwb, lwr);
        for (auto& np : model.params()) {
            const std::size_t stride = std::max<std::size_t>(1, np.param->value.size() / 4);
            for (std::size_t i = 0; i < np.param->value.size(); i += stride) {
                // masked weight slots are pinned to zero and carry no gradient
                if (np.param->value.data[i] == 0.0 && np.param->grad.data[i] == 0.0) continue;
                note_fd("model." + np.name, np.param->value.data, i, loss,
                        np.param->grad.data[i]);
            }
        }
    }

    const double dt = seconds_since(t0);
    gate.report(4, worst < 1e-5 && dt < 120.0,
                "gradient checks: worst rel err " + std::to_string(worst) + " at " + worst_at +
                    " (< 1e-5), " + std::to_string(dt) + " s (< 120 s)");
}

// --- criterion 5: DLA pattern preservation under Adam -----------------------
void criterion_pattern(Gate& gate) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(105);
    InceptionBlock blk(4, 3, 1);
    blk.init(rng);
    std::vector<NamedParam> ps;
    blk.collect_params("blk", ps);
    Adam opt(ps, AdamConfig{1e-3, 0.9, 0.999, 1e-8});
    for (int step = 0; step < 200; ++step) {
        Tensor x({2, 3, 8, 8});
        x.fill_uniform(rng, -1, 1);
        Tensor out = blk.forward(x, true);
        Tensor go(out.dims);
        go.fill_uniform(rng, -1, 1);
        for (auto& np : ps) np.param->zero_grad();
        blk.backward(go);
        opt.step();
    }
    // materialize every DLA kernel in the block and check the off-pattern zeros
    bool ok = true;
    for (auto& np : ps) {
        if (np.name.find(".dla.p") == std::string::npos) continue;
        DLAKernel dk(np.param->value.dims[0], np.param->value.dims[1]);
        dk.params = np.param->value;
        ConvKernel k = materialize(dk);
        for (std::size_t d = 0; d < k.out_channels(); ++d)
            for (std::size_t c = 0; c < k.in_channels(); ++c)
                for (std::size_t off : {1, 3, 5, 7})
                    if (k.weights.data[(d * k.in_channels() + c) * 9 + off] != 0.0) ok = false;
    }
    const double dt = seconds_since(t0);
    gate.report(5, ok && dt < 30.0,
                std::string("DLA pattern preservation after 200 Adam steps: off-pattern ") +
                    (ok ? "exact zeros" : "NONZERO LEAK") + ", " + std::to_string(dt) +
                    " s (< 30 s)");
}

// --- criterion 6: loss analytics --------------------------------------------
void criterion_loss_analytics(Gate& gate) {
    const double d1_val = loss_d1({0.5}, {0.5});
    const double d2_val = loss_d2({0.5}, {0.5});
    const bool d_ok = std::abs(d1_val - 2.0 * std::log(2.0)) <= 1e-12 &&
                      std::abs(d2_val - 2.0 * std::log(2.0)) <= 1e-12;

    Tensor uni({1, 4, 2, 2}, 0.25);
    Tensor oh({1, 4, 2, 2});
    for (int i = 0; i < 4; ++i) oh.data[i] = 1.0;
    const double seg = loss_seg(uni, oh);
    const bool seg_ok = std::abs(seg - std::log(4.0)) <= 1e-10;

    AdvWeights zero;
    zero.lambda_adv1 = zero.lambda_adv2 = 0.0;
    const bool gen_ok = loss_generator_total(3.25, {0.2}, {0.7}, zero) == 3.25;

    gate.report(6, d_ok && seg_ok && gen_ok,
                "loss analytics: loss_d at (0.5,0.5) = " + std::to_string(d1_val) +
                    ", uniform C=4 loss_seg = " + std::to_string(seg) +
                    ", lambda=0 total == l_seg " + (gen_ok ? "exactly" : "MISMATCH"));
}

// --- criterion 7: metric oracle equivalence ---------------------------------
void criterion_metrics(Gate& gate) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(107);
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const std::size_t classes = 2 + trial % 6;
        LabelMap gt(16, 16), pred(16, 16);
        for (auto& v : gt.v) v = static_cast<std::uint8_t>(rng() % classes);
        for (auto& v : pred.v) v = static_cast<std::uint8_t>(rng() % classes);
        ClassCounts c(classes);
        c.accumulate(pred, gt);
        oracle::NaiveMetrics want = oracle::naive_metrics(pred, gt, classes);
        if (c.overall_accuracy() != want.overall || c.mean_iou() != want.miou) ok = false;
        for (std::size_t i = 0; i < classes; ++i) {
            auto got = c.class_accuracy(i);
            if (std::isnan(want.class_acc[i]) != !got.has_value()) ok = false;
            if (got.has_value() && *got != want.class_acc[i]) ok = false;
        }
    }
    const double dt = seconds_since(t0);
    gate.report(7, ok && dt < 10.0,
                std::string("metric oracle equivalence on 1000 random pairs: ") +
                    (ok ? "exact" : "MISMATCH") + ", " + std::to_string(dt) + " s (< 10 s)");
}

// --- criterion 8: noise module contract --------------------------------------
void criterion_noise(Gate& gate) {
    std::mt19937_64 rng(108);
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const std::size_t c = 2 + rng() % 6, hw = 4 + rng() % 12;
        Tensor logits({1, c, hw, hw});
        logits.fill_normal(rng, 2.0);
        Tensor p = activate(logits, Activation::softmax_channels);
        NoiseConfig cfg;
        cfg.patch_size = 1 + rng() % 8;
        cfg.gaussian_std = draw_uniform(rng, 0.0, 0.3);
        cfg.uniform_halfwidth = draw_uniform(rng, 0.0, 0.3);
        cfg.gaussian_prob = draw_uniform(rng, 0.0, 1.0);
        std::mt19937_64 noise_rng(trial);
        Tensor out = apply_patch_noise(p, cfg, noise_rng);
        for (double v : out.data)
            if (v < 0.0 || v > 1.0) ok = false;
        const std::size_t HW = hw * hw;
        for (std::size_t i = 0; i < HW && ok; ++i) {
            double s = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) s += out.data[ch * HW + i];
            if (std::abs(s - 1.0) > 1e-12) ok = false;
        }
    }
    // zero-noise identity
    Tensor logits({1, 3, 8, 8});
    logits.fill_normal(rng, 1.0);
    Tensor p = activate(logits, Activation::softmax_channels);
    NoiseConfig zero;
    zero.gaussian_std = 0.0;
    zero.uniform_halfwidth = 0.0;
    std::mt19937_64 noise_rng(9);
    const bool identity =
        oracle::max_abs_diff(apply_patch_noise(p, zero, noise_rng), p) < 1e-12;

    gate.report(8, ok && identity,
                std::string("noise contract: simplex ") + (ok ? "preserved" : "VIOLATED") +
                    ", zero-noise " + (identity ? "identity" : "NOT identity"));
}

struct TrainingArtifacts {
    std::vector<FloorPlanSample> train_set, held_out;
    TrainResult first, second;
    SegModel model{SegModelConfig{}};
    fs::path ckpt_dir;
    double seconds = 0.0;
};

TrainingArtifacts run_desk_training() {
    TrainingArtifacts art;
    FloorPlanSpec spec;
    spec.seed = 42;
    for (std::size_t i = 0; i < 200; ++i)
        art.train_set.push_back(generate_floorplan(spec, i));
    for (std::size_t i = 200; i < 250; ++i)
        art.held_out.push_back(generate_floorplan(spec, i));

    art.ckpt_dir = fs::temp_directory_path() / "dlaseg_acceptance_ckpts";
    fs::remove_all(art.ckpt_dir);

    TrainConfig cfg;  // defaults: 500 iterations, batch 4, lr 1e-4, lambda 0.01
    cfg.seed = 42;
    cfg.checkpoint_dir = art.ckpt_dir;

    auto run_once = [&](SegModel& model) {
        model = SegModel(SegModelConfig{});
        model.init(cfg.seed);
        DiscriminatorConfig dc = DiscriminatorConfig::desk(10);
        Discriminator d1(dc), d2(dc);
        d1.init(derive_stream(cfg.seed, 1));
        d2.init(derive_stream(cfg.seed, 2));
        return train(model, d1, d2, art.train_set, cfg);
    };

    const auto t0 = Clock::now();
    art.first = run_once(art.model);
    art.seconds = seconds_since(t0);

    SegModel scratch{SegModelConfig{}};
    art.second = run_once(scratch);
    return art;
}

// --- criterion 9: desk-scale training target ---------------------------------
void criterion_training(Gate& gate, const TrainingArtifacts& art) {
    std::vector<double> l_seg;
    for (const auto& rec : art.first.history) l_seg.push_back(rec.l_seg);
    const double initial = smoothed(l_seg, 50, 50);
    const double final_ = smoothed(l_seg, l_seg.size(), 50);

    EvalResult ev = evaluate(art.model, art.held_out);
    const double acc_b = ev.boundary.overall_accuracy();
    const double acc_r = ev.room.overall_accuracy();

    const bool pass = final_ <= 0.5 * initial && acc_b >= 0.85 && acc_r >= 0.70 &&
                      art.seconds <= 900.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "desk training: smoothed L_seg %.4f -> %.4f (<= 50%%), held-out boundary "
                  "acc %.4f (>= 0.85), room acc %.4f (>= 0.70), %.0f s (<= 900 s)",
                  initial, final_, acc_b, acc_r, art.seconds);
    gate.report(9, pass, buf);
}

// --- criterion 10: D2 separation with a frozen mid-training generator --------
void criterion_separation(Gate& gate, const TrainingArtifacts& art) {
    const auto t0 = Clock::now();
    // freeze the generator at the iteration-100 checkpoint
    SegModel gen = model_from_checkpoint(
        read_checkpoint(art.ckpt_dir / "checkpoint_000100.dlac"));

    DiscriminatorConfig dc = DiscriminatorConfig::desk(10);
    Discriminator d2(dc);
    d2.init(777);
    Adam opt(d2.params(), AdamConfig{1e-3, 0.9, 0.999, 1e-8});

    NoiseConfig noise;  // defaults
    std::mt19937_64 rng(555), noise_rng(556);

    auto noisy_pred = [&](const FloorPlanSample& s) {
        Tensor img({1, 3, 64, 64});
        img.data = s.image.data;
        auto out = gen.infer(img);
        Tensor nb = apply_patch_noise(out.probs_boundary, noise, noise_rng);
        Tensor nr = apply_patch_noise(out.probs_room, noise, noise_rng);
        return concat_channels(nb, nr);
    };
    auto real_maps = [&](const FloorPlanSample& s) {
        Tensor ohb = one_hot(s.boundary, kBoundaryClasses);
        Tensor ohr = one_hot(s.room, kRoomClasses);
        Tensor b({1, kBoundaryClasses, 64, 64}), r({1, kRoomClasses, 64, 64});
        b.data = ohb.data;
        r.data = ohr.data;
        return concat_channels(b, r);
    };

    for (int step = 0; step < 200; ++step) {
        const auto& s = art.train_set[rng() % art.train_set.size()];
        Tensor fake = noisy_pred(s);
        Tensor real = real_maps(s);
        d2.zero_grad();
        std::vector<double> sf = d2.forward(fake);
        std::vector<double> gf(1), gr(1);
        gf[0] = 1.0 / (1.0 - sf[0]);  // d/ds of -log(1 - s), mean over batch of 1
        d2.backward(gf);
        std::vector<double> sr = d2.forward(real);
        gr[0] = -1.0 / sr[0];  // d/ds of -log(s)
        d2.backward(gr);
        opt.step();
    }

    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        const auto& s = art.train_set[(i * 7) % art.train_set.size()];
        if (d2.forward(noisy_pred(s))[0] < 0.5) ++correct;
        if (d2.forward(real_maps(s))[0] >= 0.5) ++correct;
        total += 2;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    const double dt = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "D2 separation after 200 steps: accuracy %.3f (>= 0.9), %.0f s (< 300 s)",
                  acc, dt);
    gate.report(10, acc >= 0.9 && dt < 300.0, buf);
}

// --- criterion 11: determinism -----------------------------------------------
void criterion_determinism(Gate& gate, const TrainingArtifacts& art) {
    bool identical = art.first.history.size() == art.second.history.size();
    for (std::size_t i = 0; identical && i < art.first.history.size(); ++i) {
        const auto& a = art.first.history[i];
        const auto& b = art.second.history[i];
        identical = a.l_seg == b.l_seg && a.l_adv1 == b.l_adv1 && a.l_adv2 == b.l_adv2 &&
                    a.l_d1 == b.l_d1 && a.l_d2 == b.l_d2;
    }
    gate.report(11, identical,
                std::string("determinism: two seeded runs ") +
                    (identical ? "bit-identical" : "DIVERGE"));
}

}  // namespace

int main() {
    Gate gate;
    criterion_fusion(gate);
    criterion_fold(gate);

    FloorPlanSpec warm_spec;
    warm_spec.seed = 7;
    std::vector<FloorPlanSample> warmup;
    for (std::size_t i = 0; i < 6; ++i) warmup.push_back(generate_floorplan(warm_spec, i));
    criterion_network_fuse(gate, warmup);

    criterion_gradients(gate);
    criterion_pattern(gate);
    criterion_loss_analytics(gate);
    criterion_metrics(gate);
    criterion_noise(gate);

    TrainingArtifacts art = run_desk_training();
    criterion_training(gate, art);
    criterion_separation(gate, art);
    criterion_determinism(gate, art);

    if (gate.failures > 0) {
        std::printf("%d criterion(s) failed\n", gate.failures);
        return 1;
    }
    std::printf("all 11 criteria passed\n");
    return 0;
}
