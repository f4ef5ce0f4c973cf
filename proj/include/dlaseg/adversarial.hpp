#pragma once

#include "dlaseg/tensor.hpp"

namespace dlaseg {

struct NoiseConfig {
    std::size_t patch_size = 8;
    double gaussian_std = 0.1;
    double uniform_halfwidth = 0.1;
    double gaussian_prob = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (patch_size == 0) throw ContractError("patch_size must be positive");
        if (gaussian_std < 0 || uniform_halfwidth < 0)
            throw ContractError("noise magnitudes must be >= 0");
        if (gaussian_prob < 0 || gaussian_prob > 1)
            throw ContractError("gaussian_prob must lie in [0,1]");
    }
};

struct AdvWeights {
    double lambda_adv1 = 0.01;
    double lambda_adv2 = 0.01;

    void validate() const {
        if (lambda_adv1 < 0 || lambda_adv2 < 0)
            throw ContractError("adversarial weights must be >= 0");
    }
};

/// Perturbs a per-pixel probability map patch-wise with Gaussian or uniform
/// noise, clamps to [0,1] and renormalizes channels so the output remains a
/// valid probability map. Deterministic for a given engine state.
Tensor apply_patch_noise(const Tensor& prob_map, const NoiseConfig& cfg,
                         std::mt19937_64& rng);

/// Same perturbation with the data needed to backpropagate through the
/// clamp + renormalization recorded.
struct NoiseRecord {
    Tensor noisy;          // the output map
    Tensor clamped;        // values after clamp, before renormalization
    Tensor clamp_active;   // 1.0 where the clamp saturated (gradient blocked)
    Tensor pixel_sum;      // per-pixel channel sum before renormalization [N,1,H,W]
};
NoiseRecord apply_patch_noise_recorded(const Tensor& prob_map, const NoiseConfig& cfg,
                                       std::mt19937_64& rng);
Tensor patch_noise_backward(const NoiseRecord& rec, const Tensor& grad_out);

// ---- losses (standard binary/multi-class cross-entropy forms) ----

/// Discriminator loss: mean over batch of -log(1 - d_fake) - log(d_real).
double loss_d1(const std::vector<double>& d_fake, const std::vector<double>& d_real);

/// Same functional form with the fake sample replaced by the noisy prediction.
double loss_d2(const std::vector<double>& d_noisy, const std::vector<double>& d_real);

/// Gradients of loss_d1/loss_d2 wrt the two score vectors.
void loss_d_backward(const std::vector<double>& d_fake, const std::vector<double>& d_real,
                     std::vector<double>& grad_fake, std::vector<double>& grad_real);

/// Multi-class cross-entropy between a probability map and one-hot labels,
/// averaged over batch and pixels.
double loss_seg(const Tensor& probs, const Tensor& onehot);
Tensor loss_seg_backward(const Tensor& probs, const Tensor& onehot);

/// Non-saturating generator adversarial term: mean(-log d).
double adv_generator_term(const std::vector<double>& d_on_generated);
std::vector<double> adv_generator_term_backward(const std::vector<double>& d_on_generated);

double loss_generator_total(double l_seg, const std::vector<double>& d1_on_pred,
                            const std::vector<double>& d2_on_noisy, const AdvWeights& w);

void require_probability_map(const Tensor& t, double tol = 1e-6);

}  // namespace dlaseg
