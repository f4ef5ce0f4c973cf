#pragma once

#include "dlaseg/ops.hpp"

namespace dlaseg {

/// Direction-aware additive kernel: per (out,in) channel pair six learnable
/// values, three on the main diagonal and three on the anti-diagonal of a
/// 3x3 grid. The two center values share one position after addition.
struct DLAKernel {
    // params dims [out_channels, in_channels, 6]; order a11,a22,a33,b13,b22,b31
    Tensor params;
    std::vector<double> bias;
    std::size_t pad_h = 1;
    std::size_t pad_w = 1;
    std::size_t stride = 1;

    DLAKernel() = default;
    DLAKernel(std::size_t out_c, std::size_t in_c, std::size_t s = 1)
        : params({out_c, in_c, 6}), bias(out_c, 0.0), stride(s) {}

    std::size_t out_channels() const { return params.dims[0]; }
    std::size_t in_channels() const { return params.dims[1]; }

    /// He-style init over the 5-position fan-in.
    void init(std::mt19937_64& rng) {
        params.fill_normal(rng, std::sqrt(2.0 / (3.0 * static_cast<double>(in_channels()))));
    }
};

/// Dense 3x3 form of the six-parameter kernel (element-wise sum of the
/// diagonal and anti-diagonal kernels).
ConvKernel materialize(const DLAKernel& k);

/// Projects a dense 3x3 weight gradient back onto the six parameters.
/// The shared center position routes to both a22 and b22.
Tensor dla_grad_mask(const Tensor& grad_dense);

/// Sums compatible branches (1x3 / 3x1 / 3x3, shared channels and stride)
/// into a single 3x3 kernel with padding (1,1). Biases add.
ConvKernel branch_additivity_fuse(const std::vector<ConvKernel>& kernels);

/// Absorbs inference-mode batch norm into the kernel weights and bias.
ConvKernel fold_batchnorm(const ConvKernel& k, const BatchNormParams& p);

}  // namespace dlaseg
