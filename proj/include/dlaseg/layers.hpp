#pragma once

#include <string>

#include "dlaseg/dla.hpp"

namespace dlaseg {

/// A learnable tensor with its accumulated gradient.
struct Param {
    Tensor value;
    Tensor grad;

    explicit Param(std::vector<std::size_t> dims = {1})
        : value(std::move(dims)), grad(value.dims) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct NamedParam {
    std::string name;
    Param* param;
};

struct NamedBuffer {
    std::string name;
    Tensor* tensor;
};

/// Sparsity pattern enforced on a 3x3 weight grid during training.
enum class WeightPattern { dense, middle_row, middle_col };

/// Convolution layer with optional bias and an optional structural mask.
/// Masked weights stay exactly zero through init and gradient updates.
class Conv2dLayer {
public:
    Conv2dLayer() = default;
    Conv2dLayer(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw,
                std::size_t pad_h, std::size_t pad_w, std::size_t stride,
                bool with_bias, WeightPattern pattern = WeightPattern::dense);

    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    /// Forward without caching; usable concurrently.
    Tensor infer(const Tensor& x) const;

    ConvKernel kernel() const;
    void set_kernel(const ConvKernel& k);

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out);

    std::size_t out_channels() const { return weights_.value.dims[0]; }
    std::size_t in_channels() const { return weights_.value.dims[1]; }
    std::size_t stride() const { return stride_; }

private:
    void apply_mask(Tensor& t) const;

    Param weights_;      // [D, C, kh, kw]
    Param bias_;         // [D]; ignored when !with_bias_
    bool with_bias_ = false;
    WeightPattern pattern_ = WeightPattern::dense;
    std::size_t pad_h_ = 0, pad_w_ = 0, stride_ = 1;
    Tensor cached_input_;
};

/// The six-parameter direction-aware branch. Trains through the dense 3x3
/// materialization; gradients are projected back onto the six parameters.
class DLABranchLayer {
public:
    DLABranchLayer() = default;
    DLABranchLayer(std::size_t out_c, std::size_t in_c, std::size_t stride, bool with_bias);

    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);
    Tensor infer(const Tensor& x) const;

    DLAKernel kernel() const;
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out);

private:
    Param params_;  // [D, C, 6]
    Param bias_;    // [D]
    bool with_bias_ = false;
    std::size_t stride_ = 1;
    Tensor cached_input_;
};

/// Batch norm over NCHW channels. Training mode normalizes by batch
/// statistics (population variance) and updates running stats with
/// momentum 0.9; inference mode uses the stored statistics.
class BatchNormLayer {
public:
    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels, double epsilon = 1e-5);

    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

    BatchNormParams inference_params() const;

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out);
    void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);

    std::size_t channels() const { return gamma_.value.size(); }

    double momentum = 0.9;

private:
    Param gamma_;
    Param beta_;
    Tensor running_mean_;
    Tensor running_std_;
    double epsilon_ = 1e-5;

    // caches (training-mode backward)
    Tensor cached_input_;
    std::vector<double> batch_mean_, batch_std_;
    bool cached_training_ = false;
};

/// Four additive branches (1x3, 3x1, 3x3, DLA) summed, batch-normed and
/// activated. All branches run on the padded 3x3 grid so their outputs
/// align exactly, including at borders.
class InceptionBlock {
public:
    InceptionBlock() = default;
    InceptionBlock(std::size_t out_c, std::size_t in_c, std::size_t stride,
                   Activation act = Activation::relu);

    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& x, bool training);
    Tensor backward(const Tensor& grad_out);

    /// Cache-free inference-mode forward through the unfused branches.
    Tensor infer(const Tensor& x) const;

    /// Single dense kernel equivalent to the trained block in inference
    /// mode: branch sum followed by batch-norm folding.
    ConvKernel fused_kernel() const;
    Tensor infer_fused(const Tensor& x, const ConvKernel& fused) const;

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out);
    void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);

    std::size_t out_channels() const { return conv3x3_.out_channels(); }
    std::size_t in_channels() const { return conv3x3_.in_channels(); }
    Activation activation() const { return act_; }

private:
    Conv2dLayer conv1x3_, conv3x1_, conv3x3_;
    DLABranchLayer dla_;
    BatchNormLayer bn_;
    Activation act_ = Activation::relu;

    Tensor cached_sum_, cached_bn_out_, cached_act_out_;
};

/// Attention gate for the room decoder: three additive branches over the
/// boundary features produce a single-channel map, squashed by sigmoid,
/// then applied as residual gating room + room * A.
class ContextBlock {
public:
    ContextBlock() = default;
    explicit ContextBlock(std::size_t boundary_channels);

    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& boundary_feat, const Tensor& room_feat);
    Tensor infer(const Tensor& boundary_feat, const Tensor& room_feat) const;

    /// Returns grad wrt room_feat; grad wrt boundary_feat via out-param.
    Tensor backward(const Tensor& grad_out, Tensor& grad_boundary);

    ConvKernel fused_kernel() const;
    Tensor infer_fused(const Tensor& boundary_feat, const Tensor& room_feat,
                       const ConvKernel& fused) const;

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out);

    std::size_t boundary_channels() const { return conv1x3_.in_channels(); }

private:
    Conv2dLayer conv1x3_, conv3x1_;
    DLABranchLayer dla_;

    Tensor cached_boundary_, cached_room_, cached_logits_, cached_attn_;
};

}  // namespace dlaseg
