#include "dlaseg/discriminator.hpp"

#include <cmath>

namespace dlaseg {

Discriminator::Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    if (cfg.block_convs.empty()) throw ContractError("discriminator needs >= 1 block");
    stem_ = Conv2dLayer(cfg.base_width, cfg.in_channels, 3, 3, 1, 1, 2, true);
    std::size_t width = cfg.base_width;
    for (std::size_t i = 0; i < cfg.block_convs.size(); ++i) {
        ResBlock blk;
        std::size_t out_w = width;
        if (i % 3 == 2) out_w = 2 * width;  // double width every third block
        for (std::size_t j = 0; j < cfg.block_convs[i]; ++j) {
            std::size_t ic = (j == 0) ? width : out_w;
            blk.convs.emplace_back(out_w, ic, 3, 3, 1, 1, 1, true);
        }
        if (out_w != width)
            blk.proj = Conv2dLayer(out_w, width, 1, 1, 0, 0, 1, false);
        blocks_.push_back(std::move(blk));
        width = out_w;
    }
    head_ = Conv2dLayer(1, width, 1, 1, 0, 0, 1, true);
}

void Discriminator::init(std::uint64_t seed) {
    std::mt19937_64 rng(derive_stream(seed, 0xd15c));
    stem_.init(rng);
    for (auto& blk : blocks_) {
        for (auto& c : blk.convs) c.init(rng);
        if (blk.proj) blk.proj->init(rng);
    }
    head_.init(rng);
}

Tensor Discriminator::block_forward(ResBlock& blk, const Tensor& x) {
    blk.in = x;
    blk.pre_act.clear();
    blk.post_act.clear();
    Tensor t = x;
    for (auto& c : blk.convs) {
        Tensor pre = c.forward(t);
        Tensor post = activate(pre, Activation::leaky_relu, 0.2);
        blk.pre_act.push_back(pre);
        blk.post_act.push_back(post);
        t = std::move(post);
    }
    blk.out_pre_skip = t;
    Tensor skip = blk.proj ? blk.proj->forward(x) : x;
    t = blk.out_pre_skip;
    t += skip;
    return t;
}

Tensor Discriminator::block_backward(ResBlock& blk, const Tensor& grad_out) {
    Tensor gskip = blk.proj ? blk.proj->backward(grad_out) : grad_out;
    Tensor g = grad_out;
    for (std::size_t j = blk.convs.size(); j-- > 0;) {
        g = activate_backward(blk.pre_act[j], blk.post_act[j], g, Activation::leaky_relu, 0.2);
        g = blk.convs[j].backward(g);
    }
    g += gskip;
    return g;
}

std::vector<double> Discriminator::forward(const Tensor& maps) {
    if (maps.ndim() != 4 || maps.c() != cfg_.in_channels)
        throw ShapeError("discriminator expects " + std::to_string(cfg_.in_channels) +
                         " channels, got " + maps.shape_str());
    in_ = maps;
    stem_pre_ = stem_.forward(maps);
    stem_post_ = activate(stem_pre_, Activation::leaky_relu, 0.2);
    Tensor t = stem_post_;
    for (auto& blk : blocks_) t = block_forward(blk, t);
    head_in_ = t;
    head_out_ = head_.forward(t);
    pooled_ = global_avg_pool(head_out_);
    scores_.resize(pooled_.n());
    for (std::size_t n = 0; n < pooled_.n(); ++n)
        scores_[n] = 1.0 / (1.0 + std::exp(-pooled_.data[n]));
    return scores_;
}

Tensor Discriminator::backward(const std::vector<double>& grad_scores) {
    if (grad_scores.size() != scores_.size())
        throw ShapeError("discriminator backward: batch size mismatch");
    Tensor gpool(pooled_.dims);
    for (std::size_t n = 0; n < scores_.size(); ++n)
        gpool.data[n] = grad_scores[n] * scores_[n] * (1.0 - scores_[n]);
    Tensor g = global_avg_pool_backward(head_out_, gpool);
    g = head_.backward(g);
    for (std::size_t i = blocks_.size(); i-- > 0;) g = block_backward(blocks_[i], g);
    g = activate_backward(stem_pre_, stem_post_, g, Activation::leaky_relu, 0.2);
    return stem_.backward(g);
}

void Discriminator::zero_grad() {
    for (auto& np : params()) np.param->zero_grad();
}

std::vector<NamedParam> Discriminator::params() {
    std::vector<NamedParam> out;
    stem_.collect_params("stem", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        auto& blk = blocks_[i];
        for (std::size_t j = 0; j < blk.convs.size(); ++j)
            blk.convs[j].collect_params("blk" + std::to_string(i) + ".c" + std::to_string(j),
                                        out);
        if (blk.proj)
            blk.proj->collect_params("blk" + std::to_string(i) + ".proj", out);
    }
    head_.collect_params("head", out);
    return out;
}

}  // namespace dlaseg
