#pragma once

#include <optional>

#include "dlaseg/layers.hpp"

namespace dlaseg {

struct DiscriminatorConfig {
    std::size_t in_channels = 10;  // C1 + C2 probability maps, concatenated
    std::size_t base_width = 8;
    // convolution layers per residual block; "desk" preset
    std::vector<std::size_t> block_convs{1, 2, 2};

    static DiscriminatorConfig desk(std::size_t in_channels, std::size_t width = 8) {
        return {in_channels, width, {1, 2, 2}};
    }
    static DiscriminatorConfig paper(std::size_t in_channels, std::size_t width = 64) {
        return {in_channels, width, {1, 2, 3, 4, 6, 6, 8, 8, 8}};
    }
};

/// Fully-convolutional residual classifier: stride-2 stem, residual blocks
/// of 3x3 convolutions with leaky-ReLU(0.2), width doubled every third
/// block via a 1x1 projection on the skip, then a 1x1 head, global average
/// pooling and sigmoid to one confidence per sample.
class Discriminator {
public:
    Discriminator() = default;
    explicit Discriminator(const DiscriminatorConfig& cfg);

    void init(std::uint64_t seed);

    std::vector<double> forward(const Tensor& maps);

    /// Backward from per-sample scalar loss gradients; accumulates
    /// parameter gradients and returns the gradient wrt the input maps.
    Tensor backward(const std::vector<double>& grad_scores);

    void zero_grad();
    std::vector<NamedParam> params();

    const DiscriminatorConfig& config() const { return cfg_; }

private:
    struct ResBlock {
        std::vector<Conv2dLayer> convs;
        std::optional<Conv2dLayer> proj;  // 1x1 skip projection on width change
        // caches
        Tensor in, out_pre_skip;
        std::vector<Tensor> pre_act, post_act;
    };

    Tensor block_forward(ResBlock& blk, const Tensor& x);
    Tensor block_backward(ResBlock& blk, const Tensor& grad_out);

    DiscriminatorConfig cfg_;
    Conv2dLayer stem_;
    std::vector<ResBlock> blocks_;
    Conv2dLayer head_;  // 1x1 to a single channel, no activation

    Tensor in_, stem_pre_, stem_post_, head_in_, head_out_, pooled_;
    std::vector<double> scores_;
};

}  // namespace dlaseg
