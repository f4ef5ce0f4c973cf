#include "dlaseg/layers.hpp"

#include <cmath>

namespace dlaseg {

// ---------------------------------------------------------------- Conv2dLayer

Conv2dLayer::Conv2dLayer(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw,
                         std::size_t pad_h, std::size_t pad_w, std::size_t stride,
                         bool with_bias, WeightPattern pattern)
    : weights_({out_c, in_c, kh, kw}),
      bias_({out_c}),
      with_bias_(with_bias),
      pattern_(pattern),
      pad_h_(pad_h), pad_w_(pad_w), stride_(stride) {
    if (pattern != WeightPattern::dense && (kh != 3 || kw != 3))
        throw ContractError("weight patterns apply to 3x3 grids only");
}

void Conv2dLayer::apply_mask(Tensor& t) const {
    if (pattern_ == WeightPattern::dense) return;
    const std::size_t DC = t.dims[0] * t.dims[1];
    for (std::size_t p = 0; p < DC; ++p) {
        double* w = &t.data[p * 9];
        for (std::size_t y = 0; y < 3; ++y)
            for (std::size_t x = 0; x < 3; ++x) {
                bool keep = (pattern_ == WeightPattern::middle_row) ? (y == 1) : (x == 1);
                if (!keep) w[y * 3 + x] = 0.0;
            }
    }
}

void Conv2dLayer::init(std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(in_channels() * weights_.value.dims[2] *
                                              weights_.value.dims[3]);
    weights_.value.fill_normal(rng, std::sqrt(2.0 / fan_in));
    apply_mask(weights_.value);
    std::fill(bias_.value.data.begin(), bias_.value.data.end(), 0.0);
}

ConvKernel Conv2dLayer::kernel() const {
    ConvKernel k(out_channels(), in_channels(), weights_.value.dims[2],
                 weights_.value.dims[3], pad_h_, pad_w_, stride_);
    k.weights = weights_.value;
    if (with_bias_) k.bias = bias_.value.data;
    return k;
}

void Conv2dLayer::set_kernel(const ConvKernel& k) {
    if (k.weights.dims != weights_.value.dims)
        throw ShapeError("set_kernel: shape mismatch " + k.weights.shape_str() + " vs " +
                         weights_.value.shape_str());
    weights_.value = k.weights;
    if (with_bias_) bias_.value.data = k.bias;
}

Tensor Conv2dLayer::forward(const Tensor& x) {
    cached_input_ = x;
    return conv2d(x, kernel());
}

Tensor Conv2dLayer::infer(const Tensor& x) const { return conv2d(x, kernel()); }

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
    ConvGrads g = conv2d_backward(cached_input_, kernel(), grad_out);
    apply_mask(g.grad_weights);
    weights_.grad += g.grad_weights;
    if (with_bias_)
        for (std::size_t d = 0; d < g.grad_bias.size(); ++d)
            bias_.grad.data[d] += g.grad_bias[d];
    return g.grad_input;
}

void Conv2dLayer::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".w", &weights_});
    if (with_bias_) out.push_back({prefix + ".b", &bias_});
}

// -------------------------------------------------------------- DLABranchLayer

DLABranchLayer::DLABranchLayer(std::size_t out_c, std::size_t in_c, std::size_t stride,
                               bool with_bias)
    : params_({out_c, in_c, 6}), bias_({out_c}), with_bias_(with_bias), stride_(stride) {}

void DLABranchLayer::init(std::mt19937_64& rng) {
    DLAKernel k(params_.value.dims[0], params_.value.dims[1], stride_);
    k.params = params_.value;
    k.init(rng);
    params_.value = k.params;
    std::fill(bias_.value.data.begin(), bias_.value.data.end(), 0.0);
}

DLAKernel DLABranchLayer::kernel() const {
    DLAKernel k(params_.value.dims[0], params_.value.dims[1], stride_);
    k.params = params_.value;
    if (with_bias_) k.bias = bias_.value.data;
    return k;
}

Tensor DLABranchLayer::forward(const Tensor& x) {
    cached_input_ = x;
    return conv2d(x, materialize(kernel()));
}

Tensor DLABranchLayer::infer(const Tensor& x) const {
    return conv2d(x, materialize(kernel()));
}

Tensor DLABranchLayer::backward(const Tensor& grad_out) {
    ConvGrads g = conv2d_backward(cached_input_, materialize(kernel()), grad_out);
    params_.grad += dla_grad_mask(g.grad_weights);
    if (with_bias_)
        for (std::size_t d = 0; d < g.grad_bias.size(); ++d)
            bias_.grad.data[d] += g.grad_bias[d];
    return g.grad_input;
}

void DLABranchLayer::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".p", &params_});
    if (with_bias_) out.push_back({prefix + ".b", &bias_});
}

// -------------------------------------------------------------- BatchNormLayer

BatchNormLayer::BatchNormLayer(std::size_t channels, double epsilon)
    : gamma_({channels}), beta_({channels}),
      running_mean_({channels}), running_std_({channels}),
      epsilon_(epsilon) {
    std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), 1.0);
    std::fill(running_std_.data.begin(), running_std_.data.end(), 1.0);
}

BatchNormParams BatchNormLayer::inference_params() const {
    BatchNormParams p(channels());
    p.mean = running_mean_.data;
    p.std = running_std_.data;
    p.scale = gamma_.value.data;
    p.shift = beta_.value.data;
    p.epsilon = epsilon_;
    return p;
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) {
    if (x.ndim() != 4 || x.c() != channels())
        throw ShapeError("batchnorm layer channel mismatch: " + x.shape_str());
    if (!training) {
        cached_training_ = false;
        return batchnorm(x, inference_params());
    }
    const std::size_t N = x.n(), C = x.c(), HW = x.h() * x.w();
    const double m = static_cast<double>(N * HW);
    batch_mean_.assign(C, 0.0);
    batch_std_.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* p = &x.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) s += p[i];
        }
        const double mu = s / m;
        double v = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* p = &x.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) v += (p[i] - mu) * (p[i] - mu);
        }
        batch_mean_[c] = mu;
        batch_std_[c] = std::sqrt(v / m);  // population variance
        running_mean_.data[c] = momentum * running_mean_.data[c] + (1.0 - momentum) * mu;
        running_std_.data[c] = momentum * running_std_.data[c] + (1.0 - momentum) * batch_std_[c];
    }
    cached_input_ = x;
    cached_training_ = true;

    Tensor out(x.dims);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double a = gamma_.value.data[c] / (batch_std_[c] + epsilon_);
            const double b = beta_.value.data[c] - batch_mean_[c] * a;
            const double* p = &x.data[(n * C + c) * HW];
            double* o = &out.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) o[i] = a * p[i] + b;
        }
    return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
    if (!cached_training_)
        throw ContractError("batchnorm backward requires a training-mode forward");
    const Tensor& x = cached_input_;
    const std::size_t N = x.n(), C = x.c(), HW = x.h() * x.w();
    const double m = static_cast<double>(N * HW);
    Tensor gi(x.dims);
    for (std::size_t c = 0; c < C; ++c) {
        const double mu = batch_mean_[c], sigma = batch_std_[c];
        const double s = sigma + epsilon_;
        const double gamma = gamma_.value.data[c];
        double gsum = 0.0, gdotc = 0.0;  // sum g, sum g*(x-mu)
        for (std::size_t n = 0; n < N; ++n) {
            const double* g = &grad_out.data[(n * C + c) * HW];
            const double* p = &x.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) {
                gsum += g[i];
                gdotc += g[i] * (p[i] - mu);
            }
        }
        gamma_.grad.data[c] += gdotc / s;
        beta_.grad.data[c] += gsum;
        // out_k = gamma*(x_k - mu)/s + beta; sigma depends on the whole batch
        const double sig_term = (sigma > 0.0) ? gamma / (s * s * m * sigma) : 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* g = &grad_out.data[(n * C + c) * HW];
            const double* p = &x.data[(n * C + c) * HW];
            double* o = &gi.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i)
                o[i] = gamma / s * (g[i] - gsum / m) - sig_term * (p[i] - mu) * gdotc;
        }
    }
    return gi;
}

void BatchNormLayer::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
    out.push_back({prefix + ".gamma", &gamma_});
    out.push_back({prefix + ".beta", &beta_});
}

void BatchNormLayer::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
    out.push_back({prefix + ".running_mean", &running_mean_});
    out.push_back({prefix + ".running_std", &running_std_});
}

// -------------------------------------------------------------- InceptionBlock

InceptionBlock::InceptionBlock(std::size_t out_c, std::size_t in_c, std::size_t stride,
                               Activation act)
    : conv1x3_(out_c, in_c, 3, 3, 1, 1, stride, false, WeightPattern::middle_row),
      conv3x1_(out_c, in_c, 3, 3, 1, 1, stride, false, WeightPattern::middle_col),
      conv3x3_(out_c, in_c, 3, 3, 1, 1, stride, false, WeightPattern::dense),
      dla_(out_c, in_c, stride, false),
      bn_(out_c),
      act_(act) {}

void InceptionBlock::init(std::mt19937_64& rng) {
    conv1x3_.init(rng);
    conv3x1_.init(rng);
    conv3x3_.init(rng);
    dla_.init(rng);
}

Tensor InceptionBlock::forward(const Tensor& x, bool training) {
    Tensor sum = conv1x3_.forward(x);
    sum += conv3x1_.forward(x);
    sum += conv3x3_.forward(x);
    sum += dla_.forward(x);
    cached_sum_ = sum;
    cached_bn_out_ = bn_.forward(sum, training);
    cached_act_out_ = activate(cached_bn_out_, act_);
    return cached_act_out_;
}

Tensor InceptionBlock::backward(const Tensor& grad_out) {
    Tensor g = activate_backward(cached_bn_out_, cached_act_out_, grad_out, act_);
    g = bn_.backward(g);
    Tensor gi = conv1x3_.backward(g);
    gi += conv3x1_.backward(g);
    gi += conv3x3_.backward(g);
    gi += dla_.backward(g);
    return gi;
}

Tensor InceptionBlock::infer(const Tensor& x) const {
    Tensor sum = conv1x3_.infer(x);
    sum += conv3x1_.infer(x);
    sum += conv3x3_.infer(x);
    sum += dla_.infer(x);
    return activate(batchnorm(sum, bn_.inference_params()), act_);
}

ConvKernel InceptionBlock::fused_kernel() const {
    std::vector<ConvKernel> branches;
    branches.push_back(conv1x3_.kernel());
    branches.push_back(conv3x1_.kernel());
    branches.push_back(conv3x3_.kernel());
    branches.push_back(materialize(dla_.kernel()));
    return fold_batchnorm(branch_additivity_fuse(branches), bn_.inference_params());
}

Tensor InceptionBlock::infer_fused(const Tensor& x, const ConvKernel& fused) const {
    return activate(conv2d(x, fused), act_);
}

void InceptionBlock::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
    conv1x3_.collect_params(prefix + ".k1x3", out);
    conv3x1_.collect_params(prefix + ".k3x1", out);
    conv3x3_.collect_params(prefix + ".k3x3", out);
    dla_.collect_params(prefix + ".dla", out);
    bn_.collect_params(prefix + ".bn", out);
}

void InceptionBlock::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
    bn_.collect_buffers(prefix + ".bn", out);
}

// ---------------------------------------------------------------- ContextBlock

ContextBlock::ContextBlock(std::size_t boundary_channels)
    : conv1x3_(1, boundary_channels, 3, 3, 1, 1, 1, false, WeightPattern::middle_row),
      conv3x1_(1, boundary_channels, 3, 3, 1, 1, 1, false, WeightPattern::middle_col),
      dla_(1, boundary_channels, 1, false) {}

void ContextBlock::init(std::mt19937_64& rng) {
    conv1x3_.init(rng);
    conv3x1_.init(rng);
    dla_.init(rng);
}

Tensor ContextBlock::forward(const Tensor& boundary_feat, const Tensor& room_feat) {
    if (boundary_feat.h() != room_feat.h() || boundary_feat.w() != room_feat.w() ||
        boundary_feat.n() != room_feat.n())
        throw ShapeError("context block: spatial mismatch " + boundary_feat.shape_str() +
                         " vs " + room_feat.shape_str());
    Tensor logits = conv1x3_.forward(boundary_feat);
    logits += conv3x1_.forward(boundary_feat);
    logits += dla_.forward(boundary_feat);
    cached_logits_ = logits;
    cached_attn_ = activate(logits, Activation::sigmoid);
    cached_boundary_ = boundary_feat;
    cached_room_ = room_feat;

    Tensor out(room_feat.dims);
    const std::size_t N = room_feat.n(), C = room_feat.c(), HW = room_feat.h() * room_feat.w();
    for (std::size_t n = 0; n < N; ++n) {
        const double* a = &cached_attn_.data[n * HW];
        for (std::size_t c = 0; c < C; ++c) {
            const double* r = &room_feat.data[(n * C + c) * HW];
            double* o = &out.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) o[i] = r[i] * (1.0 + a[i]);
        }
    }
    return out;
}

Tensor ContextBlock::backward(const Tensor& grad_out, Tensor& grad_boundary) {
    const std::size_t N = cached_room_.n(), C = cached_room_.c();
    const std::size_t HW = cached_room_.h() * cached_room_.w();
    Tensor grad_room(cached_room_.dims);
    Tensor grad_attn({N, 1, cached_room_.h(), cached_room_.w()});
    for (std::size_t n = 0; n < N; ++n) {
        const double* a = &cached_attn_.data[n * HW];
        double* ga = &grad_attn.data[n * HW];
        for (std::size_t c = 0; c < C; ++c) {
            const double* r = &cached_room_.data[(n * C + c) * HW];
            const double* g = &grad_out.data[(n * C + c) * HW];
            double* gr = &grad_room.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) {
                gr[i] = g[i] * (1.0 + a[i]);
                ga[i] += g[i] * r[i];
            }
        }
    }
    Tensor glogits = activate_backward(cached_logits_, cached_attn_, grad_attn,
                                       Activation::sigmoid);
    grad_boundary = conv1x3_.backward(glogits);
    grad_boundary += conv3x1_.backward(glogits);
    grad_boundary += dla_.backward(glogits);
    return grad_room;
}

Tensor ContextBlock::infer(const Tensor& boundary_feat, const Tensor& room_feat) const {
    Tensor logits = conv1x3_.infer(boundary_feat);
    logits += conv3x1_.infer(boundary_feat);
    logits += dla_.infer(boundary_feat);
    Tensor attn = activate(logits, Activation::sigmoid);
    Tensor out(room_feat.dims);
    const std::size_t N = room_feat.n(), C = room_feat.c(), HW = room_feat.h() * room_feat.w();
    for (std::size_t n = 0; n < N; ++n) {
        const double* a = &attn.data[n * HW];
        for (std::size_t c = 0; c < C; ++c) {
            const double* r = &room_feat.data[(n * C + c) * HW];
            double* o = &out.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) o[i] = r[i] * (1.0 + a[i]);
        }
    }
    return out;
}

ConvKernel ContextBlock::fused_kernel() const {
    std::vector<ConvKernel> branches;
    branches.push_back(conv1x3_.kernel());
    branches.push_back(conv3x1_.kernel());
    branches.push_back(materialize(dla_.kernel()));
    return branch_additivity_fuse(branches);
}

Tensor ContextBlock::infer_fused(const Tensor& boundary_feat, const Tensor& room_feat,
                                 const ConvKernel& fused) const {
    Tensor attn = activate(conv2d(boundary_feat, fused), Activation::sigmoid);
    Tensor out(room_feat.dims);
    const std::size_t N = room_feat.n(), C = room_feat.c(), HW = room_feat.h() * room_feat.w();
    for (std::size_t n = 0; n < N; ++n) {
        const double* a = &attn.data[n * HW];
        for (std::size_t c = 0; c < C; ++c) {
            const double* r = &room_feat.data[(n * C + c) * HW];
            double* o = &out.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i) o[i] = r[i] * (1.0 + a[i]);
        }
    }
    return out;
}

void ContextBlock::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
    conv1x3_.collect_params(prefix + ".k1x3", out);
    conv3x1_.collect_params(prefix + ".k3x1", out);
    dla_.collect_params(prefix + ".dla", out);
}

}  // namespace dlaseg
