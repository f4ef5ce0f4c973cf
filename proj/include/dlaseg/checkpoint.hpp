#pragma once

#include <filesystem>
#include <map>

#include "dlaseg/discriminator.hpp"
#include "dlaseg/model.hpp"

namespace dlaseg {

/// On-disk model container: "DLAC" header with the architecture metadata,
/// then named tensor records in the tensor binary format.
struct Checkpoint {
    SegModelConfig model_cfg;
    bool fused = false;
    bool has_discriminators = false;
    DiscriminatorConfig d1_cfg, d2_cfg;
    std::map<std::string, Tensor> records;
};

Checkpoint snapshot(SegModel& model, Discriminator* d1 = nullptr,
                    Discriminator* d2 = nullptr);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rebuilds a model from a checkpoint. Fused checkpoints yield
/// inference-only models.
SegModel model_from_checkpoint(const Checkpoint& ckpt);
Discriminator discriminator_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix);

/// Collapses the checkpointed model into its fused form and reports the
/// max abs output deviation over `probes` random inputs.
struct FuseReport {
    double max_abs_deviation_boundary = 0.0;
    double max_abs_deviation_room = 0.0;
    std::size_t probes = 0;
};
FuseReport fuse_checkpoint(const Checkpoint& in, Checkpoint& out, std::size_t probes,
                           std::size_t probe_hw = 64, std::uint64_t seed = 1);

}  // namespace dlaseg
