#include "dlaseg/dla.hpp"

namespace dlaseg {

ConvKernel materialize(const DLAKernel& k) {
    const std::size_t D = k.out_channels(), C = k.in_channels();
    ConvKernel dense(D, C, 3, 3, k.pad_h, k.pad_w, k.stride);
    dense.bias = k.bias;
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* p = &k.params.data[(d * C + c) * 6];
            double* w = &dense.weights.data[(d * C + c) * 9];
            w[0] = p[0];          // a11
            w[4] = p[1] + p[4];   // a22 + b22
            w[8] = p[2];          // a33
            w[2] = p[3];          // b13
            w[6] = p[5];          // b31
        }
    }
    return dense;
}

Tensor dla_grad_mask(const Tensor& grad_dense) {
    if (grad_dense.ndim() != 4 || grad_dense.dims[2] != 3 || grad_dense.dims[3] != 3)
        throw ShapeError("dla_grad_mask expects [D,C,3,3] gradient, got " +
                         grad_dense.shape_str());
    const std::size_t D = grad_dense.dims[0], C = grad_dense.dims[1];
    Tensor g({D, C, 6});
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* w = &grad_dense.data[(d * C + c) * 9];
            double* p = &g.data[(d * C + c) * 6];
            p[0] = w[0];
            p[1] = w[4];
            p[2] = w[8];
            p[3] = w[2];
            p[4] = w[4];
            p[5] = w[6];
        }
    }
    return g;
}

ConvKernel branch_additivity_fuse(const std::vector<ConvKernel>& kernels) {
    if (kernels.empty()) throw ContractError("branch_additivity_fuse: no kernels");
    const std::size_t D = kernels[0].out_channels();
    const std::size_t C = kernels[0].in_channels();
    const std::size_t S = kernels[0].stride;
    ConvKernel fused(D, C, 3, 3, 1, 1, S);
    for (const ConvKernel& k : kernels) {
        if (k.out_channels() != D || k.in_channels() != C)
            throw ContractError("branch_additivity_fuse: channel mismatch " +
                                k.weights.shape_str() + " vs " + kernels[0].weights.shape_str());
        if (k.stride != S)
            throw ContractError("branch_additivity_fuse: stride mismatch");
        const std::size_t kh = k.kh(), kw = k.kw();
        if (kh > 3 || kw > 3)
            throw ContractError("branch_additivity_fuse: kernel larger than 3x3");
        // embed centred in the 3x3 grid (1x3 -> middle row, 3x1 -> middle column)
        const std::size_t oy = (3 - kh) / 2, ox = (3 - kw) / 2;
        for (std::size_t d = 0; d < D; ++d) {
            fused.bias[d] += k.bias[d];
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < kh; ++y)
                    for (std::size_t x = 0; x < kw; ++x)
                        fused.weights.data[((d * C + c) * 3 + oy + y) * 3 + ox + x] +=
                            k.weights.data[((d * C + c) * kh + y) * kw + x];
        }
    }
    return fused;
}

ConvKernel fold_batchnorm(const ConvKernel& k, const BatchNormParams& p) {
    if (k.out_channels() != p.channels())
        throw ShapeError("fold_batchnorm: kernel has " + std::to_string(k.out_channels()) +
                         " output channels, batch norm has " + std::to_string(p.channels()));
    ConvKernel folded = k;
    const std::size_t per = k.in_channels() * k.kh() * k.kw();
    for (std::size_t d = 0; d < k.out_channels(); ++d) {
        const double a = p.scale[d] / (p.std[d] + p.epsilon);
        for (std::size_t i = 0; i < per; ++i) folded.weights.data[d * per + i] *= a;
        folded.bias[d] = (k.bias[d] - p.mean[d]) * a + p.shift[d];
    }
    return folded;
}

}  // namespace dlaseg
