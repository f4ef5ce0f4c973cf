#pragma once

#include "dlaseg/layers.hpp"

namespace dlaseg {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Standard bias-corrected Adam over a fixed parameter set.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<NamedParam> params, AdamConfig cfg);

    /// One update from the gradients currently accumulated in the params.
    void step();

    std::size_t t() const { return t_; }

private:
    std::vector<NamedParam> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace dlaseg
