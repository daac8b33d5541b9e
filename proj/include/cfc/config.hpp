#pragma once

#include <cstdint>
#include <string>

#include "cfc/synthgen.hpp"

namespace cfc {

// Resolved run configuration. Parses from a plain-text `key = value` file
// ('#' comments); unknown keys are rejected so typos fail loudly.
struct RunConfig {
    // data
    uint64_t seed = 7;
    int image_size = 64;
    int texture_size = 32;
    int n_identities = 20;
    int train_identities = 14;
    int nir_per_identity = 17;
    int vis_per_identity = 4;
    double yaw_range = 40.0;
    double pitch_range = 10.0;
    int max_occluders = 2;
    double occluder_radius_frac = 0.15;
    double texture_separation_floor = 0.05;

    // networks
    int embed_dim = 64;
    int base_width = 6;
    int feature_channels = 32;
    int fusion_width = 10;
    int disc_width = 6;
    int dt_hidden = 64;

    // losses
    double lambda_high = 10.0; // high-frequency adversarial weight
    double alpha_pixel = 0.01; // pixel-loss weight
    double prob_clamp_eps = 1e-7;
    std::string pixel_target = "literal"; // literal | matched_vis
    double mask_loss_weight = 0.25;       // validity-mask supervision inside the uv term
    double adv_weight = 0.0; // scales g_t + g_f in the generator objective (0 = no GAN)
    double texture_loss_weight = 4.0; // L1 between decoded and ground-truth texture
    double perceptual_weight = 3.0;   // scales the identity-preserving loss (Eq. 6 term)
    double recon_weight = 1.0;        // L1 to the matched frontal VIS exemplar

    // optimizer / loop
    double lr = 4e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_identities = 4;
    int max_steps = 550;
    int eval_every = 50;
    int patience = 10;
    double min_rel_improve = 1e-3;
    int uv_warmup_steps = 140;
    int embedder_steps = 300;
    double embedder_lr = 1e-3;
    double embedder_noise = 0.0; // Gaussian pixel noise during embedder pretraining
    double embedder_nir_suppress = 1.0; // squared-norm penalty on NIR features

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    void set(const std::string& key, const std::string& value); // throws on unknown key

    // deterministic rendering of the resolved config (sorted keys)
    std::string to_text() const;
    // FNV-1a content hash of the resolved text, hex
    std::string content_hash() const;

    synthgen::GenConfig gen_config() const;
    void validate() const;
};

std::string fnv1a_hex(const std::string& data);

} // namespace cfc
