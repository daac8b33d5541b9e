#pragma once

#include <vector>

#include "cfc/autodiff.hpp"
#include "cfc/nets.hpp"
#include "cfc/uvgeom.hpp"

namespace cfc::losses {

// Per-batch loss values. total_g is the plain sum of the five generator
// terms; lambda and alpha already live inside g_f and pixel respectively.
struct LossBundle {
    double uv = 0, g_t = 0, d_t = 0, g_f = 0, d_f = 0, perceptual = 0, pixel = 0, total_g = 0;
    double lambda = 10.0;
    double alpha = 0.01;
};

constexpr double kDefaultClampEps = 1e-7;

// mean absolute coordinate difference over jointly-valid pixels (both
// channels averaged). Throws std::invalid_argument on size mismatch or when
// the joint valid mask is empty.
double uv_loss(const uvgeom::UVField& predicted, const uvgeom::UVField& target_mean);

// mean of -log(d) with d clamped into [eps, 1-eps]
double gt_adversarial_loss(const std::vector<double>& d_out, double eps = kDefaultClampEps);

// mean of [-log(1 - d_fake) - log(d_real)]
double dt_loss(const std::vector<double>& d_fake, const std::vector<double>& d_real,
               double eps = kDefaultClampEps);

// mean of [-log(d_low) - lambda * log(d_high)]
double gf_adversarial_loss(const std::vector<double>& d_low, const std::vector<double>& d_high,
                           double lambda, double eps = kDefaultClampEps);

// sum over the two bands of mean[-log(d_real) - log(1 - d_fake)]
double df_loss(const std::vector<double>& d_low_real, const std::vector<double>& d_low_fake,
               const std::vector<double>& d_high_real, const std::vector<double>& d_high_fake,
               double eps = kDefaultClampEps);

// squared Euclidean distance between two embeddings
double perceptual_loss(const Tensor& embed_x, const Tensor& embed_fx);
double perceptual_loss(const nets::Model& m, const Tensor& x, const Tensor& fx);

// alpha * mean absolute difference; throws on shape mismatch
double pixel_loss(const Tensor& x, const Tensor& fx, double alpha);

double total_generator_loss(double uv, double g_t, double g_f, double perceptual, double pixel);

// ---- differentiable building blocks used by the trainer ----

// -log(clamp(p, eps, 1-eps)) elementwise
ad::Var neg_log_prob(const ad::Var& p, double eps = kDefaultClampEps);
// -log(clamp(1-p, eps, 1-eps)) elementwise
ad::Var neg_log_one_minus(const ad::Var& p, double eps = kDefaultClampEps);
// mean |a - b| restricted to mask (b, mask constants); mask may be all-ones
ad::Var masked_mean_abs(const ad::Var& a, const Tensor& b, const Tensor& mask);
// sum((a - b)^2), b constant
ad::Var squared_distance(const ad::Var& a, const Tensor& b);
// mean of sigmoid cross-entropy of logits vs 0/1 target map
ad::Var mask_bce(const ad::Var& logits, const Tensor& target);

} // namespace cfc::losses
