#include "dlaseg/adversarial.hpp"

#include <cmath>

namespace dlaseg {

void require_probability_map(const Tensor& t, double tol) {
    if (t.ndim() != 4)
        throw ContractError("probability map must be NCHW, got " + t.shape_str());
    const std::size_t N = t.n(), C = t.c(), HW = t.h() * t.w();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                double v = t.data[(n * C + c) * HW + i];
                if (v < -tol || v > 1.0 + tol)
                    throw ContractError("probability map entry " + std::to_string(v) +
                                        " outside [0,1]");
                s += v;
            }
            if (std::abs(s - 1.0) > tol)
                throw ContractError("probability map pixel sums to " + std::to_string(s));
        }
}

NoiseRecord apply_patch_noise_recorded(const Tensor& prob_map, const NoiseConfig& cfg,
                                       std::mt19937_64& rng) {
    cfg.validate();
    require_probability_map(prob_map);
    const std::size_t N = prob_map.n(), C = prob_map.c();
    const std::size_t H = prob_map.h(), W = prob_map.w(), HW = H * W;
    const std::size_t P = cfg.patch_size;

    NoiseRecord rec;
    rec.clamped = Tensor(prob_map.dims);
    rec.clamp_active = Tensor(prob_map.dims);
    rec.pixel_sum = Tensor({N, 1, H, W});
    rec.noisy = Tensor(prob_map.dims);

    // per-patch noise, row-major patch order, ragged at borders
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t py = 0; py < H; py += P) {
            for (std::size_t px = 0; px < W; px += P) {
                const bool gaussian = draw_uniform(rng, 0.0, 1.0) < cfg.gaussian_prob;
                const std::size_t ye = std::min(py + P, H), xe = std::min(px + P, W);
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t y = py; y < ye; ++y)
                        for (std::size_t x = px; x < xe; ++x) {
                            double noise = gaussian
                                ? cfg.gaussian_std * draw_normal(rng)
                                : draw_uniform(rng, -cfg.uniform_halfwidth,
                                               cfg.uniform_halfwidth);
                            const std::size_t idx = ((n * C + c) * H + y) * W + x;
                            double v = prob_map.data[idx] + noise;
                            if (v < 0.0) {
                                rec.clamped.data[idx] = 0.0;
                                rec.clamp_active.data[idx] = 1.0;
                            } else if (v > 1.0) {
                                rec.clamped.data[idx] = 1.0;
                                rec.clamp_active.data[idx] = 1.0;
                            } else {
                                rec.clamped.data[idx] = v;
                            }
                        }
            }
        }
    }

    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += rec.clamped.data[(n * C + c) * HW + i];
            rec.pixel_sum.data[n * HW + i] = s;
            if (s <= 0.0) {
                // uniform fallback; gradient does not flow through this pixel
                for (std::size_t c = 0; c < C; ++c)
                    rec.noisy.data[(n * C + c) * HW + i] = 1.0 / static_cast<double>(C);
            } else {
                for (std::size_t c = 0; c < C; ++c)
                    rec.noisy.data[(n * C + c) * HW + i] =
                        rec.clamped.data[(n * C + c) * HW + i] / s;
            }
        }
    return rec;
}

Tensor apply_patch_noise(const Tensor& prob_map, const NoiseConfig& cfg,
                         std::mt19937_64& rng) {
    return apply_patch_noise_recorded(prob_map, cfg, rng).noisy;
}

Tensor patch_noise_backward(const NoiseRecord& rec, const Tensor& grad_out) {
    require_same_shape(rec.noisy, grad_out, "patch_noise_backward");
    const std::size_t N = grad_out.n(), C = grad_out.c();
    const std::size_t HW = grad_out.h() * grad_out.w();
    Tensor gi(grad_out.dims);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            const double s = rec.pixel_sum.data[n * HW + i];
            if (s <= 0.0) continue;
            // y_c = clamped_c / s, s = sum clamped; clamp blocks the gradient
            double dot = 0.0;
            for (std::size_t c = 0; c < C; ++c)
                dot += grad_out.data[(n * C + c) * HW + i] *
                       rec.noisy.data[(n * C + c) * HW + i];
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t idx = (n * C + c) * HW + i;
                if (rec.clamp_active.data[idx] != 0.0) continue;
                gi.data[idx] = (grad_out.data[idx] - dot) / s;
            }
        }
    return gi;
}

namespace {
void check_unit_interval(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!(x > 0.0 && x < 1.0))
            throw ContractError(std::string(what) + ": score " + std::to_string(x) +
                                " outside (0,1)");
}
}  // namespace

double loss_d1(const std::vector<double>& d_fake, const std::vector<double>& d_real) {
    if (d_fake.size() != d_real.size() || d_fake.empty())
        throw ContractError("loss_d1: mismatched or empty score vectors");
    check_unit_interval(d_fake, "loss_d1 fake");
    check_unit_interval(d_real, "loss_d1 real");
    double l = 0.0;
    for (std::size_t i = 0; i < d_fake.size(); ++i)
        l += -std::log(1.0 - d_fake[i]) - std::log(d_real[i]);
    return l / static_cast<double>(d_fake.size());
}

double loss_d2(const std::vector<double>& d_noisy, const std::vector<double>& d_real) {
    return loss_d1(d_noisy, d_real);
}

void loss_d_backward(const std::vector<double>& d_fake, const std::vector<double>& d_real,
                     std::vector<double>& grad_fake, std::vector<double>& grad_real) {
    const double inv = 1.0 / static_cast<double>(d_fake.size());
    grad_fake.resize(d_fake.size());
    grad_real.resize(d_real.size());
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        grad_fake[i] = inv / (1.0 - d_fake[i]);
        grad_real[i] = -inv / d_real[i];
    }
}

double loss_seg(const Tensor& probs, const Tensor& onehot) {
    require_same_shape(probs, onehot, "loss_seg");
    require_probability_map(probs);
    constexpr double kFloor = 1e-12;
    const std::size_t N = probs.n(), C = probs.c(), HW = probs.h() * probs.w();
    double l = 0.0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double* p = &probs.data[(n * C + c) * HW];
            const double* y = &onehot.data[(n * C + c) * HW];
            for (std::size_t i = 0; i < HW; ++i)
                if (y[i] != 0.0) l -= y[i] * std::log(p[i] + kFloor);
        }
    return l / static_cast<double>(N * HW);
}

Tensor loss_seg_backward(const Tensor& probs, const Tensor& onehot) {
    constexpr double kFloor = 1e-12;
    const std::size_t N = probs.n(), HW = probs.h() * probs.w();
    const double inv = 1.0 / static_cast<double>(N * HW);
    Tensor g(probs.dims);
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (onehot.data[i] != 0.0)
            g.data[i] = -inv * onehot.data[i] / (probs.data[i] + kFloor);
    return g;
}

double adv_generator_term(const std::vector<double>& d_on_generated) {
    check_unit_interval(d_on_generated, "adv term");
    double l = 0.0;
    for (double d : d_on_generated) l -= std::log(d);
    return l / static_cast<double>(d_on_generated.size());
}

std::vector<double> adv_generator_term_backward(const std::vector<double>& d_on_generated) {
    std::vector<double> g(d_on_generated.size());
    const double inv = 1.0 / static_cast<double>(d_on_generated.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -inv / d_on_generated[i];
    return g;
}

double loss_generator_total(double l_seg, const std::vector<double>& d1_on_pred,
                            const std::vector<double>& d2_on_noisy, const AdvWeights& w) {
    w.validate();
    double total = l_seg;
    if (w.lambda_adv1 > 0.0) total += w.lambda_adv1 * adv_generator_term(d1_on_pred);
    if (w.lambda_adv2 > 0.0) total += w.lambda_adv2 * adv_generator_term(d2_on_noisy);
    return total;
}

}  // namespace dlaseg
