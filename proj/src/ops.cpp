#include "dlaseg/ops.hpp"

#include <algorithm>
#include <cmath>

namespace dlaseg {

namespace {

void check_conv_shapes(const Tensor& input, const ConvKernel& k) {
    if (input.ndim() != 4)
        throw ShapeError("conv2d expects NCHW input, got " + input.shape_str());
    if (input.c() != k.in_channels())
        throw ShapeError("conv2d channel mismatch: input " + input.shape_str() +
                         " vs kernel " + k.weights.shape_str());
    if (input.h() + 2 * k.pad_h < k.kh() || input.w() + 2 * k.pad_w < k.kw())
        throw ShapeError("conv2d: padded input " + input.shape_str() +
                         " smaller than kernel " + k.weights.shape_str());
    if (k.bias.size() != k.out_channels())
        throw ShapeError("conv2d: bias length " + std::to_string(k.bias.size()) +
                         " != out_channels " + std::to_string(k.out_channels()));
}

// Valid output range [lo, hi) along one axis for kernel offset kx:
// indices where ox * stride + kx - pad lands inside [0, extent).
struct AxisRange {
    std::size_t lo, hi;
};

AxisRange valid_range(std::size_t out_extent, std::size_t in_extent, std::size_t kx,
                      std::size_t pad, std::size_t stride) {
    std::size_t lo = 0;
    if (pad > kx) lo = (pad - kx + stride - 1) / stride;
    if (in_extent + pad <= kx) return {0, 0};
    std::size_t hi = (in_extent - 1 + pad - kx) / stride + 1;
    hi = std::min(hi, out_extent);
    return {lo, std::max(lo, hi)};
}

// Accumulates a fully dense 3x3 / stride 1 / pad 1 correlation of one input
// plane into one output plane. Single pass over the plane, nine multiplies
// per pixel; noticeably faster than the generic tap-by-tap loop.
void conv3x3_dense_plane(const double* in, const double* w, double* out,
                         std::size_t H, std::size_t W) {
    for (std::size_t y = 0; y < H; ++y) {
        const double* r0 = y > 0 ? in + (y - 1) * W : nullptr;
        const double* r1 = in + y * W;
        const double* r2 = y + 1 < H ? in + (y + 1) * W : nullptr;
        double* o = out + y * W;
        auto edge = [&](std::size_t x) {
            double acc = 0.0;
            for (int t = 0; t < 9; ++t) {
                const std::size_t kx = static_cast<std::size_t>(t % 3);
                const double* r = (t < 3) ? r0 : (t < 6) ? r1 : r2;
                if (!r) continue;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += w[t] * r[ix];
            }
            o[x] += acc;
        };
        edge(0);
        if (W > 1) edge(W - 1);
        if (W < 3) continue;
        if (r0 && r2) {
            for (std::size_t x = 1; x + 1 < W; ++x)
                o[x] += w[0] * r0[x - 1] + w[1] * r0[x] + w[2] * r0[x + 1] +
                        w[3] * r1[x - 1] + w[4] * r1[x] + w[5] * r1[x + 1] +
                        w[6] * r2[x - 1] + w[7] * r2[x] + w[8] * r2[x + 1];
        } else if (r0) {
            for (std::size_t x = 1; x + 1 < W; ++x)
                o[x] += w[0] * r0[x - 1] + w[1] * r0[x] + w[2] * r0[x + 1] +
                        w[3] * r1[x - 1] + w[4] * r1[x] + w[5] * r1[x + 1];
        } else if (r2) {
            for (std::size_t x = 1; x + 1 < W; ++x)
                o[x] += w[3] * r1[x - 1] + w[4] * r1[x] + w[5] * r1[x + 1] +
                        w[6] * r2[x - 1] + w[7] * r2[x] + w[8] * r2[x + 1];
        } else {
            for (std::size_t x = 1; x + 1 < W; ++x)
                o[x] += w[3] * r1[x - 1] + w[4] * r1[x] + w[5] * r1[x + 1];
        }
    }
}

// Accumulates the nine weight gradients of a 3x3 / stride 1 / pad 1
// correlation between one input plane and one grad-output plane.
void conv3x3_grad_weights_plane(const double* in, const double* go, double* gw,
                                std::size_t H, std::size_t W) {
    double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t y = 0; y < H; ++y) {
        const double* r0 = y > 0 ? in + (y - 1) * W : nullptr;
        const double* r1 = in + y * W;
        const double* r2 = y + 1 < H ? in + (y + 1) * W : nullptr;
        const double* g = go + y * W;
        auto edge = [&](std::size_t x) {
            for (int t = 0; t < 9; ++t) {
                const double* r = (t < 3) ? r0 : (t < 6) ? r1 : r2;
                if (!r) continue;
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(x + static_cast<std::size_t>(t % 3)) - 1;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                acc[t] += g[x] * r[ix];
            }
        };
        edge(0);
        if (W > 1) edge(W - 1);
        if (W < 3) continue;
        for (std::size_t x = 1; x + 1 < W; ++x) {
            const double gv = g[x];
            if (r0) {
                acc[0] += gv * r0[x - 1];
                acc[1] += gv * r0[x];
                acc[2] += gv * r0[x + 1];
            }
            acc[3] += gv * r1[x - 1];
            acc[4] += gv * r1[x];
            acc[5] += gv * r1[x + 1];
            if (r2) {
                acc[6] += gv * r2[x - 1];
                acc[7] += gv * r2[x];
                acc[8] += gv * r2[x + 1];
            }
        }
    }
    for (int t = 0; t < 9; ++t) gw[t] += acc[t];
}

bool all_nonzero9(const double* w) {
    for (int t = 0; t < 9; ++t)
        if (w[t] == 0.0) return false;
    return true;
}

}  // namespace

Tensor conv2d(const Tensor& input, const ConvKernel& k) {
    check_conv_shapes(input, k);
    const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
    const std::size_t D = k.out_channels(), KH = k.kh(), KW = k.kw(), S = k.stride;
    const std::size_t OH = (H + 2 * k.pad_h - KH) / S + 1;
    const std::size_t OW = (W + 2 * k.pad_w - KW) / S + 1;
    Tensor out({N, D, OH, OW});

#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t d = 0; d < D; ++d) {
            double* orow = &out.data[((n * D + d) * OH) * OW];
            for (std::size_t i = 0; i < OH * OW; ++i) orow[i] = k.bias[d];
            for (std::size_t c = 0; c < C; ++c) {
                const double* in = &input.data[((n * C + c) * H) * W];
                const double* wk = &k.weights.data[((d * C + c) * KH) * KW];
                if (KH == 3 && KW == 3 && S == 1 && k.pad_h == 1 && k.pad_w == 1 &&
                    all_nonzero9(wk)) {
                    conv3x3_dense_plane(in, wk, orow, H, W);
                    continue;
                }
                for (std::size_t ky = 0; ky < KH; ++ky) {
                    const AxisRange ry = valid_range(OH, H, ky, k.pad_h, S);
                    for (std::size_t kx = 0; kx < KW; ++kx) {
                        const double wv = wk[ky * KW + kx];
                        if (wv == 0.0) continue;
                        const AxisRange rx = valid_range(OW, W, kx, k.pad_w, S);
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const std::size_t iy = oy * S + ky - k.pad_h;
                            double* dst = orow + oy * OW;
                            const double* src = in + iy * W + (rx.lo * S + kx) - k.pad_w;
                            if (S == 1) {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                                    dst[ox] += wv * src[ox - rx.lo];
                            } else {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                                    dst[ox] += wv * src[(ox - rx.lo) * S];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvKernel& k, const Tensor& grad_out) {
    check_conv_shapes(input, k);
    const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
    const std::size_t D = k.out_channels(), KH = k.kh(), KW = k.kw(), S = k.stride;
    const std::size_t OH = (H + 2 * k.pad_h - KH) / S + 1;
    const std::size_t OW = (W + 2 * k.pad_w - KW) / S + 1;
    if (grad_out.dims != std::vector<std::size_t>{N, D, OH, OW})
        throw ShapeError("conv2d_backward: grad_out " + grad_out.shape_str() +
                         " does not match forward output [" + std::to_string(N) + "x" +
                         std::to_string(D) + "x" + std::to_string(OH) + "x" +
                         std::to_string(OW) + "]");

    ConvGrads g{Tensor(input.dims), Tensor(k.weights.dims),
                std::vector<double>(D, 0.0)};

    // grad wrt input: independent per (n, c)
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            double* gi = &g.grad_input.data[((n * C + c) * H) * W];
            for (std::size_t d = 0; d < D; ++d) {
                const double* go = &grad_out.data[((n * D + d) * OH) * OW];
                const double* wk = &k.weights.data[((d * C + c) * KH) * KW];
                if (KH == 3 && KW == 3 && S == 1 && k.pad_h == 1 && k.pad_w == 1 &&
                    all_nonzero9(wk)) {
                    // grad wrt input is the correlation of grad_out with the
                    // spatially flipped kernel
                    double fw[9];
                    for (int t = 0; t < 9; ++t) fw[t] = wk[8 - t];
                    conv3x3_dense_plane(go, fw, gi, H, W);
                    continue;
                }
                for (std::size_t ky = 0; ky < KH; ++ky) {
                    const AxisRange ry = valid_range(OH, H, ky, k.pad_h, S);
                    for (std::size_t kx = 0; kx < KW; ++kx) {
                        const double wv = wk[ky * KW + kx];
                        if (wv == 0.0) continue;
                        const AxisRange rx = valid_range(OW, W, kx, k.pad_w, S);
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const std::size_t iy = oy * S + ky - k.pad_h;
                            const double* gorow = go + oy * OW;
                            double* girow = gi + iy * W + (rx.lo * S + kx) - k.pad_w;
                            if (S == 1) {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                                    girow[ox - rx.lo] += wv * gorow[ox];
                            } else {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                                    girow[(ox - rx.lo) * S] += wv * gorow[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    // grad wrt weights and bias: independent per output channel d
#pragma omp parallel for schedule(static)
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t n = 0; n < N; ++n) {
            const double* go = &grad_out.data[((n * D + d) * OH) * OW];
            for (std::size_t i = 0; i < OH * OW; ++i) g.grad_bias[d] += go[i];
            for (std::size_t c = 0; c < C; ++c) {
                const double* in = &input.data[((n * C + c) * H) * W];
                double* gw = &g.grad_weights.data[((d * C + c) * KH) * KW];
                if (KH == 3 && KW == 3 && S == 1 && k.pad_h == 1 && k.pad_w == 1) {
                    conv3x3_grad_weights_plane(in, go, gw, H, W);
                    continue;
                }
                for (std::size_t ky = 0; ky < KH; ++ky) {
                    const AxisRange ry = valid_range(OH, H, ky, k.pad_h, S);
                    for (std::size_t kx = 0; kx < KW; ++kx) {
                        const AxisRange rx = valid_range(OW, W, kx, k.pad_w, S);
                        double acc = 0.0;
                        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
                            const std::size_t iy = oy * S + ky - k.pad_h;
                            const double* gorow = go + oy * OW;
                            const double* inrow = in + iy * W + (rx.lo * S + kx) - k.pad_w;
                            if (S == 1) {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                                    acc += gorow[ox] * inrow[ox - rx.lo];
                            } else {
                                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                                    acc += gorow[ox] * inrow[(ox - rx.lo) * S];
                            }
                        }
                        gw[ky * KW + kx] += acc;
                    }
                }
            }
        }
    }
    return g;
}

Tensor batchnorm(const Tensor& input, const BatchNormParams& p) {
    if (input.ndim() != 4 || input.c() != p.channels())
        throw ShapeError("batchnorm channel mismatch: input " + input.shape_str() +
                         " vs params with " + std::to_string(p.channels()) + " channels");
    Tensor out(input.dims);
    const std::size_t N = input.n(), C = input.c(), HW = input.h() * input.w();
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const double a = p.scale[c] / (p.std[c] + p.epsilon);
            const double b = p.shift[c] - p.mean[c] * a;
            const double* in = &input.data[(n * C + c) * HW];
            double* o = &out.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) o[i] = a * in[i] + b;
        }
    }
    return out;
}

Tensor activate(const Tensor& input, Activation kind, double alpha) {
    Tensor out(input.dims);
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < input.size(); ++i)
                out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
            break;
        case Activation::leaky_relu:
            for (std::size_t i = 0; i < input.size(); ++i)
                out.data[i] = input.data[i] > 0.0 ? input.data[i] : alpha * input.data[i];
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < input.size(); ++i)
                out.data[i] = 1.0 / (1.0 + std::exp(-input.data[i]));
            break;
        case Activation::softmax_channels: {
            if (input.ndim() != 4)
                throw ShapeError("softmax_channels expects NCHW, got " + input.shape_str());
            const std::size_t N = input.n(), C = input.c(), HW = input.h() * input.w();
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t i = 0; i < HW; ++i) {
                    double mx = input.data[(n * C) * HW + i];
                    for (std::size_t c = 1; c < C; ++c)
                        mx = std::max(mx, input.data[(n * C + c) * HW + i]);
                    double sum = 0.0;
                    for (std::size_t c = 0; c < C; ++c) {
                        double e = std::exp(input.data[(n * C + c) * HW + i] - mx);
                        out.data[(n * C + c) * HW + i] = e;
                        sum += e;
                    }
                    for (std::size_t c = 0; c < C; ++c)
                        out.data[(n * C + c) * HW + i] /= sum;
                }
            }
            break;
        }
    }
    return out;
}

Tensor activate_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out,
                         Activation kind, double alpha) {
    require_same_shape(input, grad_out, "activation backward");
    Tensor g(input.dims);
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < input.size(); ++i)
                g.data[i] = input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
            break;
        case Activation::leaky_relu:
            for (std::size_t i = 0; i < input.size(); ++i)
                g.data[i] = input.data[i] > 0.0 ? grad_out.data[i] : alpha * grad_out.data[i];
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < input.size(); ++i) {
                double y = output.data[i];
                g.data[i] = grad_out.data[i] * y * (1.0 - y);
            }
            break;
        case Activation::softmax_channels: {
            const std::size_t N = input.n(), C = input.c(), HW = input.h() * input.w();
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t i = 0; i < HW; ++i) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        dot += grad_out.data[(n * C + c) * HW + i] *
                               output.data[(n * C + c) * HW + i];
                    for (std::size_t c = 0; c < C; ++c) {
                        double y = output.data[(n * C + c) * HW + i];
                        g.data[(n * C + c) * HW + i] =
                            y * (grad_out.data[(n * C + c) * HW + i] - dot);
                    }
                }
            }
            break;
        }
    }
    return g;
}

Tensor global_avg_pool(const Tensor& input) {
    if (input.ndim() != 4)
        throw ShapeError("global_avg_pool expects NCHW, got " + input.shape_str());
    const std::size_t N = input.n(), C = input.c(), HW = input.h() * input.w();
    Tensor out({N, C, 1, 1});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            const double* in = &input.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) s += in[i];
            out.data[n * C + c] = s / static_cast<double>(HW);
        }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& input, const Tensor& grad_out) {
    const std::size_t N = input.n(), C = input.c(), HW = input.h() * input.w();
    Tensor g(input.dims);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double v = grad_out.data[n * C + c] / static_cast<double>(HW);
            double* gp = &g.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) gp[i] = v;
        }
    return g;
}

Tensor upsample2x(const Tensor& input) {
    const std::size_t N = input.n(), C = input.c(), H = input.h(), W = input.w();
    Tensor out({N, C, 2 * H, 2 * W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t x = 0; x < 2 * W; ++x)
                    out.at4(n, c, y, x) = input.at4(n, c, y / 2, x / 2);
    return out;
}

Tensor upsample2x_backward(const Tensor& grad_out) {
    const std::size_t N = grad_out.n(), C = grad_out.c();
    const std::size_t H = grad_out.h() / 2, W = grad_out.w() / 2;
    Tensor g({N, C, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t x = 0; x < 2 * W; ++x)
                    g.at4(n, c, y / 2, x / 2) += grad_out.at4(n, c, y, x);
    return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw ShapeError("concat_channels: incompatible shapes " + a.shape_str() +
                         " vs " + b.shape_str());
    const std::size_t N = a.n(), H = a.h(), W = a.w(), HW = H * W;
    Tensor out({N, a.c() + b.c(), H, W});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(&a.data[n * a.c() * HW], a.c() * HW,
                    &out.data[n * (a.c() + b.c()) * HW]);
        std::copy_n(&b.data[n * b.c() * HW], b.c() * HW,
                    &out.data[(n * (a.c() + b.c()) + a.c()) * HW]);
    }
    return out;
}

void split_channels(const Tensor& grad, std::size_t c_a, Tensor& grad_a, Tensor& grad_b) {
    const std::size_t N = grad.n(), C = grad.c(), HW = grad.h() * grad.w();
    const std::size_t c_b = C - c_a;
    grad_a = Tensor({N, c_a, grad.h(), grad.w()});
    grad_b = Tensor({N, c_b, grad.h(), grad.w()});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(&grad.data[n * C * HW], c_a * HW, &grad_a.data[n * c_a * HW]);
        std::copy_n(&grad.data[(n * C + c_a) * HW], c_b * HW, &grad_b.data[n * c_b * HW]);
    }
}

}  // namespace dlaseg
