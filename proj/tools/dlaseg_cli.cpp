// Command-line front end: dataset generation, training, evaluation,
// kernel fusion and result rendering.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "dlaseg/render.hpp"
#include "dlaseg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dlaseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

json load_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& scope) {
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown config key \"" + scope + key + "\"");
}

/// Applies a dotted-path override like train.learning_rate=1e-4.
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value, got \"" + kv + "\"");
    std::string path = kv.substr(0, eq), value = kv.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;  // plain string
    }
    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot - pos);
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

FloorPlanSpec spec_from_config(const json& j) {
    reject_unknown_keys(j,
                        {"height", "width", "min_rooms", "max_rooms", "shapes",
                         "wall_thickness", "min_door_len", "max_door_len", "seed"},
                        "");
    FloorPlanSpec spec;
    if (j.contains("height")) spec.height = j["height"].get<std::size_t>();
    if (j.contains("width")) spec.width = j["width"].get<std::size_t>();
    if (j.contains("min_rooms")) spec.min_rooms = j["min_rooms"].get<std::size_t>();
    if (j.contains("max_rooms")) spec.max_rooms = j["max_rooms"].get<std::size_t>();
    if (j.contains("wall_thickness"))
        spec.wall_thickness = j["wall_thickness"].get<std::size_t>();
    if (j.contains("min_door_len")) spec.min_door_len = j["min_door_len"].get<std::size_t>();
    if (j.contains("max_door_len")) spec.max_door_len = j["max_door_len"].get<std::size_t>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("shapes")) {
        spec.shapes.clear();
        for (const auto& s : j["shapes"]) {
            const std::string name = s.get<std::string>();
            if (name == "rectangle") spec.shapes.push_back(RoomShape::rectangle);
            else if (name == "circle") spec.shapes.push_back(RoomShape::circle);
            else if (name == "inclined_quad") spec.shapes.push_back(RoomShape::inclined_quad);
            else throw ConfigError("unknown value in config key \"shapes\": " + name);
        }
    }
    try {
        spec.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("invalid spec: ") + e.what());
    }
    return spec;
}

struct FullTrainConfig {
    TrainConfig train;
    SegModelConfig model;
    std::string disc_preset = "desk";
    std::size_t disc_width = 8;
};

FullTrainConfig train_config_from_json(const json& cfg) {
    FullTrainConfig out;
    reject_unknown_keys(cfg, {"train", "model"}, "");
    if (cfg.contains("train")) {
        const json& t = cfg["train"];
        reject_unknown_keys(
            t,
            {"learning_rate", "beta1", "beta2", "epsilon", "iterations", "batch_size",
             "lambda_adv1", "lambda_adv2", "noise_patch_size", "noise_gaussian_std",
             "noise_uniform_halfwidth", "noise_gaussian_prob", "noise_seed",
             "label_smoothing", "seed", "eval_every", "disc_preset", "disc_width"},
            "train.");
        auto& tc = out.train;
        if (t.contains("learning_rate")) tc.adam.learning_rate = t["learning_rate"];
        if (t.contains("beta1")) tc.adam.beta1 = t["beta1"];
        if (t.contains("beta2")) tc.adam.beta2 = t["beta2"];
        if (t.contains("epsilon")) tc.adam.epsilon = t["epsilon"];
        if (t.contains("iterations")) tc.iterations = t["iterations"];
        if (t.contains("batch_size")) tc.batch_size = t["batch_size"];
        if (t.contains("lambda_adv1")) tc.adv.lambda_adv1 = t["lambda_adv1"];
        if (t.contains("lambda_adv2")) tc.adv.lambda_adv2 = t["lambda_adv2"];
        if (t.contains("noise_patch_size")) tc.noise.patch_size = t["noise_patch_size"];
        if (t.contains("noise_gaussian_std")) tc.noise.gaussian_std = t["noise_gaussian_std"];
        if (t.contains("noise_uniform_halfwidth"))
            tc.noise.uniform_halfwidth = t["noise_uniform_halfwidth"];
        if (t.contains("noise_gaussian_prob"))
            tc.noise.gaussian_prob = t["noise_gaussian_prob"];
        if (t.contains("noise_seed")) tc.noise.seed = t["noise_seed"];
        if (t.contains("label_smoothing")) tc.label_smoothing = t["label_smoothing"];
        if (t.contains("seed")) tc.seed = t["seed"];
        if (t.contains("eval_every")) tc.eval_every = t["eval_every"];
        if (t.contains("disc_preset")) out.disc_preset = t["disc_preset"];
        if (t.contains("disc_width")) out.disc_width = t["disc_width"];
    }
    if (cfg.contains("model")) {
        const json& m = cfg["model"];
        reject_unknown_keys(m, {"enc_channels", "dec_channels"}, "model.");
        if (m.contains("enc_channels"))
            out.model.enc_channels = m["enc_channels"].get<std::vector<std::size_t>>();
        if (m.contains("dec_channels"))
            out.model.dec_channels = m["dec_channels"].get<std::vector<std::size_t>>();
    }
    if (out.disc_preset != "desk" && out.disc_preset != "paper")
        throw ConfigError("train.disc_preset must be \"desk\" or \"paper\"");
    return out;
}

int cmd_generate(const fs::path& spec_path, std::size_t count, std::int64_t seed,
               const fs::path& out_dir) {
    FloorPlanSpec spec;
    if (!spec_path.empty()) spec = spec_from_config(load_json(spec_path));
    if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
    generate_dataset(spec, count, out_dir);
    std::cout << "wrote " << count << " samples to " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides,
              const fs::path& dataset_dir, const fs::path& out_dir) {
    json cfg = config_path.empty() ? json::object() : load_json(config_path);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    FullTrainConfig fc = train_config_from_json(cfg);

    if (!fs::exists(dataset_dir / "manifest.json"))
        throw ConfigError("dataset manifest not found in " + dataset_dir.string());
    auto dataset = load_dataset(dataset_dir);

    SegModel model(fc.model);
    model.init(fc.train.seed);
    const std::size_t dch = fc.model.c1 + fc.model.c2;
    DiscriminatorConfig dcfg = fc.disc_preset == "desk"
                                   ? DiscriminatorConfig::desk(dch, fc.disc_width)
                                   : DiscriminatorConfig::paper(dch, fc.disc_width);
    Discriminator d1(dcfg), d2(dcfg);
    d1.init(derive_stream(fc.train.seed, 1));
    d2.init(derive_stream(fc.train.seed, 2));

    fs::create_directories(out_dir);
    fc.train.checkpoint_dir = out_dir;
    TrainResult res = train(model, d1, d2, dataset, fc.train);

    write_loss_csv(out_dir / "loss_history.csv", res.history);
    write_checkpoint(out_dir / "checkpoint_final.dlac", snapshot(model, &d1, &d2));
    std::cout << "trained " << fc.train.iterations << " iterations; final l_seg="
              << res.history.back().l_seg << "\n";
    return kExitOk;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& dataset_dir, const fs::path& out) {
    Checkpoint ckpt = read_checkpoint(ckpt_path);
    if (ckpt.model_cfg.c1 != kBoundaryClasses || ckpt.model_cfg.c2 != kRoomClasses)
        throw ConfigError("checkpoint class counts (" + std::to_string(ckpt.model_cfg.c1) +
                          "," + std::to_string(ckpt.model_cfg.c2) +
                          ") do not match the dataset classes");
    SegModel model = model_from_checkpoint(ckpt);
    auto dataset = load_dataset(dataset_dir);
    EvalResult r = evaluate(model, dataset);
    const std::string body = metrics_to_json(r);
    fs::path tmp = out;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        f << body;
    }
    fs::rename(tmp, out);
    std::cout << body;
    return kExitOk;
}

int cmd_fuse(const fs::path& in_path, const fs::path& out_path, std::size_t probes,
             const fs::path& report_path) {
    Checkpoint in = read_checkpoint(in_path);
    if (in.fused) throw ConfigError("input checkpoint is already fused");
    Checkpoint fused;
    FuseReport rep = fuse_checkpoint(in, fused, probes);
    write_checkpoint(out_path, fused);
    json j{{"probes", rep.probes},
           {"max_abs_deviation_boundary", rep.max_abs_deviation_boundary},
           {"max_abs_deviation_room", rep.max_abs_deviation_room}};
    const std::string body = j.dump(2) + "\n";
    if (!report_path.empty()) {
        fs::path tmp = report_path;
        tmp += ".tmp";
        {
            std::ofstream f(tmp, std::ios::trunc);
            f << body;
        }
        fs::rename(tmp, report_path);
    }
    std::cout << body;
    return kExitOk;
}

int cmd_render(const fs::path& ckpt_path, const fs::path& dataset_dir, std::size_t index,
               const fs::path& out) {
    SegModel model = model_from_checkpoint(read_checkpoint(ckpt_path));
    FloorPlanSample s = load_sample(dataset_dir, index);
    Tensor img({1, 3, s.image.dims[1], s.image.dims[2]});
    img.data = s.image.data;
    auto probs = model.infer(img);
    LabelMap pred_b = argmax_channels(probs.probs_boundary, 0);
    LabelMap pred_r = argmax_channels(probs.probs_room, 0);
    write_ppm(out, render_comparison(s.image, s.boundary, s.room, pred_b, pred_r));
    std::cout << "wrote " << out.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Floor-plan segmentation with direction-aware additive kernels"};
    app.require_subcommand(1);

    fs::path spec_path, out_dir, dataset_dir, config_path, ckpt_in, ckpt_out, report_path;
    std::size_t count = 100, probes = 10, index = 0;
    std::int64_t seed = -1;
    std::vector<std::string> overrides;

    auto* gen = app.add_subcommand("generate", "Generate a synthetic floor-plan dataset");
    gen->add_option("--spec", spec_path, "JSON spec file");
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--seed", seed, "RNG seed (overrides spec)");
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* tr = app.add_subcommand("train", "Train the segmentation network");
    tr->add_option("--config", config_path, "JSON training config");
    tr->add_option("--set", overrides, "dotted-key override, e.g. train.learning_rate=1e-4");
    tr->add_option("--dataset", dataset_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", ckpt_in, "checkpoint file")->required();
    ev->add_option("--dataset", dataset_dir, "dataset directory")->required();
    ev->add_option("--out", ckpt_out, "metrics JSON output")->required();

    auto* fu = app.add_subcommand("fuse", "Fuse a checkpoint into single dense kernels");
    fu->add_option("--in", ckpt_in, "unfused checkpoint")->required();
    fu->add_option("--out", ckpt_out, "fused checkpoint")->required();
    fu->add_option("--probes", probes, "number of probe inputs");
    fu->add_option("--report", report_path, "equivalence report JSON");

    auto* re = app.add_subcommand("render", "Render input / ground truth / prediction");
    re->add_option("--checkpoint", ckpt_in, "checkpoint file")->required();
    re->add_option("--dataset", dataset_dir, "dataset directory")->required();
    re->add_option("--index", index, "sample index");
    re->add_option("--out", ckpt_out, "output PPM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // exits 0 with usage
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(spec_path, count, seed, out_dir);
        if (tr->parsed()) return cmd_train(config_path, overrides, dataset_dir, out_dir);
        if (ev->parsed()) return cmd_eval(ckpt_in, dataset_dir, ckpt_out);
        if (fu->parsed()) return cmd_fuse(ckpt_in, ckpt_out, probes, report_path);
        if (re->parsed()) return cmd_render(ckpt_in, dataset_dir, index, ckpt_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        std::cerr << "error: bad config value: " << e.what() << "\n";
        return kExitUsage;
    } catch (const TrainAbort& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
