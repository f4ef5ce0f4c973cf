#pragma once

#include <array>
#include <optional>

#include "dlaseg/layers.hpp"

namespace dlaseg {

struct SegModelConfig {
    std::size_t in_channels = 3;
    std::vector<std::size_t> enc_channels{16, 32, 64, 128};
    std::vector<std::size_t> dec_channels{64, 32, 16, 8};
    std::size_t c1 = 3;  // boundary classes: background, wall, door/window
    std::size_t c2 = 7;  // room classes: background + 6 room types

    bool operator==(const SegModelConfig&) const = default;
};

/// Encoder plus two decoders. The boundary decoder emits C1-class
/// probabilities; the room decoder emits C2-class probabilities and is
/// gated per stage by attention computed from the boundary decoder's
/// same-scale features. Skip connections concatenate same-scale encoder
/// features; the final decoder stage concatenates the input image.
class SegModel {
public:
    SegModel() = default;
    explicit SegModel(const SegModelConfig& cfg);

    void init(std::uint64_t seed);

    struct Output {
        Tensor probs_boundary;  // N x C1 x H x W, softmax per pixel
        Tensor probs_room;      // N x C2 x H x W
    };

    /// Training/inference forward with caching for backward.
    Output forward(const Tensor& image, bool training);

    /// Cache-free forward; uses fused kernels when the model is fused.
    Output infer(const Tensor& image) const;

    /// Backpropagates loss gradients wrt the two probability maps and
    /// accumulates parameter gradients.
    void backward(const Tensor& grad_probs_boundary, const Tensor& grad_probs_room);

    void zero_grad();
    std::vector<NamedParam> params();
    std::vector<NamedBuffer> buffers();

    /// Collapses every inception block and context attention into single
    /// dense kernels (batch norms folded). The model becomes inference-only.
    void fuse();
    bool fused() const { return is_fused_; }

    const SegModelConfig& config() const { return cfg_; }

    // Fused-kernel access for checkpointing.
    struct FusedKernels {
        std::vector<ConvKernel> enc, dec_b, dec_r, ctx;
    };
    const FusedKernels& fused_kernels() const { return fused_; }
    void set_fused_kernels(FusedKernels fk);

private:
    std::size_t skip_channels(std::size_t stage) const;

    SegModelConfig cfg_;
    std::vector<InceptionBlock> enc_;
    std::vector<InceptionBlock> dec_b_, dec_r_;
    std::vector<ContextBlock> ctx_;
    Conv2dLayer head_b_, head_r_;

    bool is_fused_ = false;
    FusedKernels fused_;

    // forward caches
    Tensor input_;
    std::vector<Tensor> e_;             // encoder stage outputs
    std::vector<Tensor> fb_;            // boundary decoder stage outputs
    std::vector<Tensor> fr_;            // gated room decoder stage outputs
    std::vector<Tensor> up_b_, up_r_;   // concat inputs per decoder stage
    Tensor logits_b_, logits_r_, probs_b_, probs_r_;
};

void require_divisible16(const Tensor& image);

}  // namespace dlaseg
