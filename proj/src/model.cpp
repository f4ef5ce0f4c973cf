#include "dlaseg/model.hpp"

namespace dlaseg {

void require_divisible16(const Tensor& image) {
    if (image.ndim() != 4)
        throw ShapeError("expected NCHW image, got " + image.shape_str());
    if (image.h() % 16 != 0 || image.w() % 16 != 0)
        throw ShapeError("image height and width must be multiples of 16, got " +
                         image.shape_str());
}

SegModel::SegModel(const SegModelConfig& cfg) : cfg_(cfg) {
    if (cfg.enc_channels.size() != 4 || cfg.dec_channels.size() != 4)
        throw ContractError("SegModel expects 4 encoder and 4 decoder stages");
    std::size_t prev = cfg.in_channels;
    for (std::size_t s = 0; s < 4; ++s) {
        enc_.emplace_back(cfg.enc_channels[s], prev, 2);
        prev = cfg.enc_channels[s];
    }
    for (std::size_t s = 0; s < 4; ++s) {
        std::size_t in_c = (s == 0 ? cfg.enc_channels[3] : cfg.dec_channels[s - 1]) +
                           skip_channels(s);
        dec_b_.emplace_back(cfg.dec_channels[s], in_c, 1);
        dec_r_.emplace_back(cfg.dec_channels[s], in_c, 1);
        ctx_.emplace_back(cfg.dec_channels[s]);
    }
    head_b_ = Conv2dLayer(cfg.c1, cfg.dec_channels[3], 3, 3, 1, 1, 1, true);
    head_r_ = Conv2dLayer(cfg.c2, cfg.dec_channels[3], 3, 3, 1, 1, 1, true);
}

std::size_t SegModel::skip_channels(std::size_t stage) const {
    // stage 0..2 concat encoder features at the matching scale; the final
    // full-resolution stage concatenates the input image itself.
    return stage < 3 ? cfg_.enc_channels[2 - stage] : cfg_.in_channels;
}

void SegModel::init(std::uint64_t seed) {
    std::mt19937_64 rng(derive_stream(seed, 0xd1a));
    for (auto& b : enc_) b.init(rng);
    for (auto& b : dec_b_) b.init(rng);
    for (auto& b : dec_r_) b.init(rng);
    for (auto& b : ctx_) b.init(rng);
    head_b_.init(rng);
    head_r_.init(rng);
}

SegModel::Output SegModel::forward(const Tensor& image, bool training) {
    if (is_fused_ && training)
        throw ContractError("fused model cannot run in training mode");
    if (is_fused_) return infer(image);
    require_divisible16(image);
    if (image.c() != cfg_.in_channels)
        throw ShapeError("model expects " + std::to_string(cfg_.in_channels) +
                         " input channels, got " + image.shape_str());
    input_ = image;
    e_.assign(4, Tensor{});
    fb_.assign(4, Tensor{});
    fr_.assign(4, Tensor{});
    up_b_.assign(4, Tensor{});
    up_r_.assign(4, Tensor{});

    Tensor t = image;
    for (std::size_t s = 0; s < 4; ++s) {
        t = enc_[s].forward(t, training);
        e_[s] = t;
    }

    // boundary decoder
    Tensor b = e_[3];
    for (std::size_t s = 0; s < 4; ++s) {
        Tensor up = upsample2x(b);
        const Tensor& skip = s < 3 ? e_[2 - s] : input_;
        up_b_[s] = concat_channels(up, skip);
        b = dec_b_[s].forward(up_b_[s], training);
        fb_[s] = b;
    }
    logits_b_ = head_b_.forward(fb_[3]);
    probs_b_ = activate(logits_b_, Activation::softmax_channels);

    // room decoder, gated per stage by boundary features
    Tensor r = e_[3];
    for (std::size_t s = 0; s < 4; ++s) {
        Tensor up = upsample2x(r);
        const Tensor& skip = s < 3 ? e_[2 - s] : input_;
        up_r_[s] = concat_channels(up, skip);
        Tensor mid = dec_r_[s].forward(up_r_[s], training);
        r = ctx_[s].forward(fb_[s], mid);
        fr_[s] = r;
    }
    logits_r_ = head_r_.forward(fr_[3]);
    probs_r_ = activate(logits_r_, Activation::softmax_channels);

    return {probs_b_, probs_r_};
}

void SegModel::backward(const Tensor& grad_probs_boundary, const Tensor& grad_probs_room) {
    // heads
    Tensor glb = activate_backward(logits_b_, probs_b_, grad_probs_boundary,
                                   Activation::softmax_channels);
    Tensor glr = activate_backward(logits_r_, probs_r_, grad_probs_room,
                                   Activation::softmax_channels);
    std::vector<Tensor> gfb(4);  // accumulated grads wrt boundary stage outputs
    for (std::size_t s = 0; s < 4; ++s) gfb[s] = Tensor(fb_[s].dims);
    std::vector<Tensor> ge(4);  // accumulated grads wrt encoder stage outputs
    for (std::size_t s = 0; s < 4; ++s) ge[s] = Tensor(e_[s].dims);

    gfb[3] += head_b_.backward(glb);

    // room decoder backward (contributes into boundary features via gating)
    Tensor g = head_r_.backward(glr);
    for (std::size_t s = 4; s-- > 0;) {
        Tensor gb;
        Tensor gmid = ctx_[s].backward(g, gb);
        gfb[s] += gb;
        Tensor gin = dec_r_[s].backward(gmid);
        Tensor gup, gskip;
        std::size_t up_c = s == 0 ? cfg_.enc_channels[3] : cfg_.dec_channels[s - 1];
        split_channels(gin, up_c, gup, gskip);
        if (s < 3) ge[2 - s] += gskip;  // grad wrt the input image is dropped
        Tensor gprev = upsample2x_backward(gup);
        if (s == 0)
            ge[3] += gprev;
        else
            g = std::move(gprev);
    }

    // boundary decoder backward
    g = std::move(gfb[3]);
    for (std::size_t s = 4; s-- > 0;) {
        Tensor gin = dec_b_[s].backward(g);
        Tensor gup, gskip;
        std::size_t up_c = s == 0 ? cfg_.enc_channels[3] : cfg_.dec_channels[s - 1];
        split_channels(gin, up_c, gup, gskip);
        if (s < 3) ge[2 - s] += gskip;
        Tensor gprev = upsample2x_backward(gup);
        if (s == 0) {
            ge[3] += gprev;
        } else {
            g = std::move(gprev);
            g += gfb[s - 1];
        }
    }

    // encoder backward
    g = std::move(ge[3]);
    for (std::size_t s = 4; s-- > 0;) {
        Tensor gin = enc_[s].backward(g);
        if (s > 0) {
            g = std::move(gin);
            g += ge[s - 1];
        }
    }
}

SegModel::Output SegModel::infer(const Tensor& image) const {
    require_divisible16(image);
    if (image.c() != cfg_.in_channels)
        throw ShapeError("model expects " + std::to_string(cfg_.in_channels) +
                         " input channels, got " + image.shape_str());
    std::vector<Tensor> e(4);
    Tensor t = image;
    for (std::size_t s = 0; s < 4; ++s) {
        t = is_fused_ ? enc_[s].infer_fused(t, fused_.enc[s]) : enc_[s].infer(t);
        e[s] = t;
    }

    std::vector<Tensor> fb(4);
    Tensor b = e[3];
    for (std::size_t s = 0; s < 4; ++s) {
        Tensor up = upsample2x(b);
        const Tensor& skip = s < 3 ? e[2 - s] : image;
        Tensor cat = concat_channels(up, skip);
        b = is_fused_ ? dec_b_[s].infer_fused(cat, fused_.dec_b[s]) : dec_b_[s].infer(cat);
        fb[s] = b;
    }
    Tensor probs_b = activate(head_b_.infer(fb[3]), Activation::softmax_channels);

    Tensor r = e[3];
    for (std::size_t s = 0; s < 4; ++s) {
        Tensor up = upsample2x(r);
        const Tensor& skip = s < 3 ? e[2 - s] : image;
        Tensor cat = concat_channels(up, skip);
        Tensor mid = is_fused_ ? dec_r_[s].infer_fused(cat, fused_.dec_r[s])
                               : dec_r_[s].infer(cat);
        r = is_fused_ ? ctx_[s].infer_fused(fb[s], mid, fused_.ctx[s])
                      : ctx_[s].infer(fb[s], mid);
    }
    Tensor probs_r = activate(head_r_.infer(r), Activation::softmax_channels);
    return {probs_b, probs_r};
}

void SegModel::zero_grad() {
    for (auto& np : params()) np.param->zero_grad();
}

std::vector<NamedParam> SegModel::params() {
    std::vector<NamedParam> out;
    if (!is_fused_) {
        for (std::size_t s = 0; s < 4; ++s)
            enc_[s].collect_params("enc" + std::to_string(s), out);
        for (std::size_t s = 0; s < 4; ++s)
            dec_b_[s].collect_params("decb" + std::to_string(s), out);
        for (std::size_t s = 0; s < 4; ++s)
            dec_r_[s].collect_params("decr" + std::to_string(s), out);
        for (std::size_t s = 0; s < 4; ++s)
            ctx_[s].collect_params("ctx" + std::to_string(s), out);
    }
    head_b_.collect_params("headb", out);
    head_r_.collect_params("headr", out);
    return out;
}

std::vector<NamedBuffer> SegModel::buffers() {
    std::vector<NamedBuffer> out;
    if (is_fused_) return out;
    for (std::size_t s = 0; s < 4; ++s) enc_[s].collect_buffers("enc" + std::to_string(s), out);
    for (std::size_t s = 0; s < 4; ++s) dec_b_[s].collect_buffers("decb" + std::to_string(s), out);
    for (std::size_t s = 0; s < 4; ++s) dec_r_[s].collect_buffers("decr" + std::to_string(s), out);
    return out;
}

void SegModel::fuse() {
    if (is_fused_) throw ContractError("model is already fused");
    fused_.enc.clear();
    fused_.dec_b.clear();
    fused_.dec_r.clear();
    fused_.ctx.clear();
    for (auto& b : enc_) fused_.enc.push_back(b.fused_kernel());
    for (auto& b : dec_b_) fused_.dec_b.push_back(b.fused_kernel());
    for (auto& b : dec_r_) fused_.dec_r.push_back(b.fused_kernel());
    for (auto& b : ctx_) fused_.ctx.push_back(b.fused_kernel());
    is_fused_ = true;
}

void SegModel::set_fused_kernels(FusedKernels fk) {
    fused_ = std::move(fk);
    is_fused_ = true;
}

}  // namespace dlaseg
