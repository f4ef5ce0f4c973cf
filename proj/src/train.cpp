#include "dlaseg/train.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dlaseg {

using nlohmann::json;

namespace {

Tensor batch_images(const std::vector<FloorPlanSample>& ds,
                    const std::vector<std::size_t>& idx) {
    const std::size_t H = ds[idx[0]].image.dims[1], W = ds[idx[0]].image.dims[2];
    Tensor out({idx.size(), 3, H, W});
    for (std::size_t b = 0; b < idx.size(); ++b)
        std::copy(ds[idx[b]].image.data.begin(), ds[idx[b]].image.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(b * 3 * H * W));
    return out;
}

Tensor batch_onehot(const std::vector<FloorPlanSample>& ds,
                    const std::vector<std::size_t>& idx, bool boundary, std::size_t C,
                    double smoothing) {
    const LabelMap& first = boundary ? ds[idx[0]].boundary : ds[idx[0]].room;
    Tensor out({idx.size(), C, first.h, first.w});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        Tensor oh = one_hot(boundary ? ds[idx[b]].boundary : ds[idx[b]].room, C);
        std::copy(oh.data.begin(), oh.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(b * oh.size()));
    }
    if (smoothing > 0.0)
        for (double& v : out.data)
            v = v * (1.0 - smoothing) + smoothing / static_cast<double>(C);
    return out;
}

}  // namespace

double smoothed(const std::vector<double>& values, std::size_t end, std::size_t window) {
    const std::size_t lo = end >= window ? end - window : 0;
    double s = 0.0;
    for (std::size_t i = lo; i < end; ++i) s += values[i];
    return s / static_cast<double>(end - lo);
}

TrainResult train(SegModel& model, Discriminator& d1, Discriminator& d2,
                  const std::vector<FloorPlanSample>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw ContractError("training dataset is empty");
    if (model.fused()) throw ContractError("cannot train a fused model");

    const std::size_t C1 = model.config().c1, C2 = model.config().c2;
    Adam opt_gen(model.params(), cfg.adam);
    Adam opt_d1(d1.params(), cfg.adam);
    Adam opt_d2(d2.params(), cfg.adam);

    std::mt19937_64 sample_rng(derive_stream(cfg.seed, 0x5a3));
    std::mt19937_64 noise_rng(derive_stream(cfg.noise.seed ? cfg.noise.seed : cfg.seed, 0x401));

    TrainResult result;
    LossRecord last_finite{0, 0, 0, 0, 0, 0};

    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        std::vector<std::size_t> idx(cfg.batch_size);
        for (auto& i : idx) i = static_cast<std::size_t>(sample_rng() % dataset.size());

        Tensor images = batch_images(dataset, idx);
        Tensor yb = batch_onehot(dataset, idx, true, C1, 0.0);
        Tensor yr = batch_onehot(dataset, idx, false, C2, 0.0);

        try {
            auto out = model.forward(images, true);
            const double l_seg = loss_seg(out.probs_boundary, yb) + loss_seg(out.probs_room, yr);
            Tensor gb = loss_seg_backward(out.probs_boundary, yb);
            Tensor gr = loss_seg_backward(out.probs_room, yr);

            double l_adv1 = 0.0, l_adv2 = 0.0, l_d1 = 0.0, l_d2 = 0.0;

            Tensor pred_maps, noisy_maps;
            NoiseRecord noise_b, noise_r;
            const bool use_d1 = cfg.adv.lambda_adv1 > 0.0;
            const bool use_d2 = cfg.adv.lambda_adv2 > 0.0;
            if (use_d1 || use_d2)
                pred_maps = concat_channels(out.probs_boundary, out.probs_room);

            if (use_d1) {
                // generator's adversarial term through D1 (D1 grads discarded below)
                d1.zero_grad();
                auto s = d1.forward(pred_maps);
                ++result.d1_calls;
                l_adv1 = adv_generator_term(s);
                auto gs = adv_generator_term_backward(s);
                for (double& v : gs) v *= cfg.adv.lambda_adv1;
                Tensor gmaps = d1.backward(gs);
                Tensor ga, gbm;
                split_channels(gmaps, C1, ga, gbm);
                gb += ga;
                gr += gbm;
            }
            if (use_d2) {
                noise_b = apply_patch_noise_recorded(out.probs_boundary, cfg.noise, noise_rng);
                noise_r = apply_patch_noise_recorded(out.probs_room, cfg.noise, noise_rng);
                noisy_maps = concat_channels(noise_b.noisy, noise_r.noisy);
                d2.zero_grad();
                auto s = d2.forward(noisy_maps);
                ++result.d2_calls;
                l_adv2 = adv_generator_term(s);
                auto gs = adv_generator_term_backward(s);
                for (double& v : gs) v *= cfg.adv.lambda_adv2;
                Tensor gmaps = d2.backward(gs);
                Tensor ga, gbm;
                split_channels(gmaps, C1, ga, gbm);
                gb += patch_noise_backward(noise_b, ga);
                gr += patch_noise_backward(noise_r, gbm);
            }

            model.zero_grad();
            model.backward(gb, gr);
            opt_gen.step();

            // discriminator updates on detached predictions vs one-hot truth
            if (use_d1 || use_d2) {
                Tensor ybs = cfg.label_smoothing > 0.0
                                 ? batch_onehot(dataset, idx, true, C1, cfg.label_smoothing)
                                 : yb;
                Tensor yrs = cfg.label_smoothing > 0.0
                                 ? batch_onehot(dataset, idx, false, C2, cfg.label_smoothing)
                                 : yr;
                Tensor real_maps = concat_channels(ybs, yrs);
                if (use_d1) {
                    d1.zero_grad();
                    auto sf = d1.forward(pred_maps);
                    ++result.d1_calls;
                    const double inv = 1.0 / static_cast<double>(sf.size());
                    std::vector<double> gf(sf.size());
                    for (std::size_t i = 0; i < sf.size(); ++i) gf[i] = inv / (1.0 - sf[i]);
                    d1.backward(gf);
                    auto sr = d1.forward(real_maps);
                    ++result.d1_calls;
                    std::vector<double> grl(sr.size());
                    for (std::size_t i = 0; i < sr.size(); ++i) grl[i] = -inv / sr[i];
                    d1.backward(grl);
                    opt_d1.step();
                    l_d1 = loss_d1(sf, sr);
                }
                if (use_d2) {
                    d2.zero_grad();
                    auto sf = d2.forward(noisy_maps);
                    ++result.d2_calls;
                    const double inv = 1.0 / static_cast<double>(sf.size());
                    std::vector<double> gf(sf.size());
                    for (std::size_t i = 0; i < sf.size(); ++i) gf[i] = inv / (1.0 - sf[i]);
                    d2.backward(gf);
                    auto sr = d2.forward(real_maps);
                    ++result.d2_calls;
                    std::vector<double> grl(sr.size());
                    for (std::size_t i = 0; i < sr.size(); ++i) grl[i] = -inv / sr[i];
                    d2.backward(grl);
                    opt_d2.step();
                    l_d2 = loss_d2(sf, sr);
                }
            }

            LossRecord rec{it, l_seg, l_adv1, l_adv2, l_d1, l_d2};
            if (!std::isfinite(l_seg) || !std::isfinite(l_adv1) || !std::isfinite(l_adv2) ||
                !std::isfinite(l_d1) || !std::isfinite(l_d2))
                throw TrainAbort(it, last_finite);
            last_finite = rec;
            result.history.push_back(rec);
        } catch (const ContractError&) {
            // numerical degeneration (e.g. saturated discriminator scores)
            // is treated the same way as a non-finite loss
            throw TrainAbort(it, last_finite);
        }

        if (!cfg.checkpoint_dir.empty() && cfg.eval_every && it % cfg.eval_every == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_%06zu.dlac", it);
            write_checkpoint(cfg.checkpoint_dir / name, snapshot(model, &d1, &d2));
        }
    }
    return result;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<LossRecord>& history) {
    std::ostringstream os;
    os << "iteration,l_seg,l_adv1,l_adv2,l_d1,l_d2\n";
    os.precision(17);
    for (const auto& r : history)
        os << r.iteration << ',' << r.l_seg << ',' << r.l_adv1 << ',' << r.l_adv2 << ','
           << r.l_d1 << ',' << r.l_d2 << '\n';
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string());
        f << os.str();
    }
    std::filesystem::rename(tmp, path);
}

EvalResult evaluate(const SegModel& model, const std::vector<FloorPlanSample>& dataset) {
    if (dataset.empty()) throw ContractError("evaluation dataset is empty");
    EvalResult r;
    for (const auto& s : dataset) {
        Tensor img({1, 3, s.image.dims[1], s.image.dims[2]});
        img.data = s.image.data;
        auto out = model.infer(img);
        r.boundary.accumulate(argmax_channels(out.probs_boundary, 0), s.boundary);
        r.room.accumulate(argmax_channels(out.probs_room, 0), s.room);
    }
    return r;
}

namespace {

json head_json(const ClassCounts& c, const char* const* names) {
    json per_class = json::object();
    // per-class accuracy reported for foreground classes only; background
    // still counts toward overall accuracy
    for (std::size_t i = 1; i < c.classes; ++i) {
        auto acc = c.class_accuracy(i);
        per_class[names[i]] = acc ? json(*acc) : json(nullptr);
    }
    return json{{"class_accuracy", per_class},
                {"overall_accuracy", c.overall_accuracy()},
                {"mean_iou", c.mean_iou()},
                {"notes",
                 "per-class accuracy covers foreground classes; overall accuracy "
                 "includes background"}};
}

}  // namespace

std::string metrics_to_json(const EvalResult& r) {
    json merged = json::object();
    for (std::size_t i = 1; i < kBoundaryClasses; ++i) {
        auto a = r.boundary.class_accuracy(i);
        merged[kBoundaryClassNames[i]] = a ? json(*a) : json(nullptr);
    }
    for (std::size_t i = 1; i < kRoomClasses; ++i) {
        auto a = r.room.class_accuracy(i);
        merged[kRoomClassNames[i]] = a ? json(*a) : json(nullptr);
    }
    json j{{"boundary", head_json(r.boundary, kBoundaryClassNames.data())},
           {"room", head_json(r.room, kRoomClassNames.data())},
           {"merged_class_accuracy", merged}};
    return j.dump(2) + "\n";
}

}  // namespace dlaseg
