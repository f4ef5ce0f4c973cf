#pragma once

#include "dlaseg/adam.hpp"
#include "dlaseg/adversarial.hpp"
#include "dlaseg/checkpoint.hpp"
#include "dlaseg/data.hpp"
#include "dlaseg/metrics.hpp"

namespace dlaseg {

struct TrainConfig {
    AdamConfig adam;                 // learning rate 1e-4, betas 0.9/0.999
    std::size_t iterations = 500;
    std::size_t batch_size = 4;
    AdvWeights adv;
    NoiseConfig noise;
    double label_smoothing = 0.0;    // applied to the one-hot maps fed to D
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;
    std::filesystem::path checkpoint_dir;  // empty = no checkpoints written

    void validate() const {
        if (iterations < 1) throw ContractError("iterations must be >= 1");
        if (batch_size < 1) throw ContractError("batch_size must be >= 1");
        if (adam.learning_rate <= 0) throw ContractError("learning rate must be > 0");
        adv.validate();
        noise.validate();
    }
};

struct LossRecord {
    std::size_t iteration;
    double l_seg, l_adv1, l_adv2, l_d1, l_d2;
};

class TrainAbort : public std::runtime_error {
public:
    TrainAbort(std::size_t iteration, const LossRecord& last_finite)
        : std::runtime_error("non-finite loss at iteration " + std::to_string(iteration) +
                             "; last finite l_seg=" + std::to_string(last_finite.l_seg)),
          iteration(iteration), last_finite(last_finite) {}
    std::size_t iteration;
    LossRecord last_finite;
};

struct TrainResult {
    std::vector<LossRecord> history;
    std::size_t d1_calls = 0;  // discriminator forward invocations
    std::size_t d2_calls = 0;
};

/// Alternating generator / discriminator training: one generator update,
/// then one update of each discriminator that carries a nonzero weight.
TrainResult train(SegModel& model, Discriminator& d1, Discriminator& d2,
                  const std::vector<FloorPlanSample>& dataset, const TrainConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

struct EvalResult {
    ClassCounts boundary{kBoundaryClasses};
    ClassCounts room{kRoomClasses};
};

EvalResult evaluate(const SegModel& model, const std::vector<FloorPlanSample>& dataset);

std::string metrics_to_json(const EvalResult& r);

/// Mean of the last `window` values (or fewer at the start).
double smoothed(const std::vector<double>& values, std::size_t end, std::size_t window);

}  // namespace dlaseg
