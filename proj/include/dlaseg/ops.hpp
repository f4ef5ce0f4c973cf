#pragma once

#include "dlaseg/tensor.hpp"

namespace dlaseg {

/// Dense convolution kernel with zero-padding semantics.
struct ConvKernel {
    Tensor weights;              // [out_channels, in_channels, kh, kw]
    std::vector<double> bias;    // length out_channels
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
    std::size_t stride = 1;

    ConvKernel() = default;
    ConvKernel(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw,
               std::size_t ph = 0, std::size_t pw = 0, std::size_t s = 1)
        : weights({out_c, in_c, kh, kw}), bias(out_c, 0.0), pad_h(ph), pad_w(pw), stride(s) {
        if (kh % 2 == 0 || kw % 2 == 0)
            throw ContractError("kernel sides must be odd");
        if (s == 0) throw ContractError("stride must be positive");
    }

    std::size_t out_channels() const { return weights.dims[0]; }
    std::size_t in_channels() const { return weights.dims[1]; }
    std::size_t kh() const { return weights.dims[2]; }
    std::size_t kw() const { return weights.dims[3]; }
};

struct BatchNormParams {
    std::vector<double> mean;   // mu per channel
    std::vector<double> std;    // sigma per channel (standard deviation)
    std::vector<double> scale;  // gamma
    std::vector<double> shift;  // beta
    double epsilon = 1e-5;

    explicit BatchNormParams(std::size_t channels = 0)
        : mean(channels, 0.0), std(channels, 1.0),
          scale(channels, 1.0), shift(channels, 0.0) {}

    std::size_t channels() const { return mean.size(); }
};

Tensor conv2d(const Tensor& input, const ConvKernel& k);

struct ConvGrads {
    Tensor grad_input;
    Tensor grad_weights;
    std::vector<double> grad_bias;
};
ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& k, const Tensor& grad_out);

/// Inference-mode batch norm using the stored statistics.
Tensor batchnorm(const Tensor& input, const BatchNormParams& p);

enum class Activation { relu, leaky_relu, sigmoid, softmax_channels };

Tensor activate(const Tensor& input, Activation kind, double alpha = 0.2);

/// d(loss)/d(input) given d(loss)/d(output). `output` must be the forward result.
Tensor activate_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out,
                         Activation kind, double alpha = 0.2);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& input, const Tensor& grad_out);

/// Nearest-neighbour x2 upsampling.
Tensor upsample2x(const Tensor& input);
Tensor upsample2x_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& grad, std::size_t c_a, Tensor& grad_a, Tensor& grad_b);

}  // namespace dlaseg
