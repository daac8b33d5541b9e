#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfc/autodiff.hpp"
#include "cfc/config.hpp"
#include "cfc/rng.hpp"
#include "cfc/synthgen.hpp"

namespace cfc::nets {

using ad::Var;

struct NetConfig {
    int resolution = 64;
    int texture_size = 32;
    int embed_dim = 64;
    int base_width = 6;
    int feature_channels = 32;
    int fusion_width = 10;
    int disc_width = 6;
    int dt_hidden = 64;
    int n_classes = 10;

    static NetConfig from_run(const RunConfig& rc, int n_classes);
    std::string descriptor() const; // key=value lines, for the checkpoint
    static NetConfig from_descriptor(const std::string& text);
};

// Ordered registry of named parameter leaves. Order is the serialization
// order, so save/load round-trips bit-exactly.
struct ParamSet {
    std::vector<std::pair<std::string, Var>> entries;

    Var add(const std::string& name, Tensor init);
    Var find(const std::string& name) const;
    void zero_grads();
    uint64_t value_hash() const; // FNV-1a over raw value bytes
};

struct ConvLayer {
    Var w, b;
    int stride = 1, pad = 1;
    Var operator()(const Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

struct FcLayer {
    Var w, b;
    Var operator()(const Var& x) const { return ad::linear(w, b, x); }
};

// Aggregate of every learnable sub-network. Parameters live in three stores:
// generator (G_p, G_t, fusion), discriminators (D_t, D_rl, D_rh) and the
// frozen identity embedder.
class Model {
public:
    Model(const NetConfig& cfg, uint64_t init_seed);

    const NetConfig& cfg() const { return cfg_; }
    ParamSet& gen_params() { return gen_; }
    ParamSet& disc_params() { return disc_; }
    ParamSet& embed_params() { return emb_; }
    const ParamSet& gen_params() const { return gen_; }
    const ParamSet& disc_params() const { return disc_; }
    const ParamSet& embed_params() const { return emb_; }

    // ---- forward functions ----
    struct PoseOut {
        Var coords;     // [2,H,W], sigmoid-bounded
        Var mask_logit; // [1,H,W]
    };
    PoseOut pose_net_forward(const Var& image) const;

    struct TextureOut {
        Var rep;      // [d], tanh-bounded identity representation
        Var features; // [32,Ht,Wt], second-last layer activation
        Var color;    // [3,Ht,Wt], sigmoid
    };
    TextureOut texture_net_forward(const Var& image, synthgen::Spectrum spectrum) const;
    // encoder half only (cheap anchor representations for D_t pairs)
    Var texture_rep(const Var& image, synthgen::Spectrum spectrum) const;

    // warped_features: [32,H,W]; warped_valid: [1,H,W] mask plane
    Var fusion_forward(const Var& warped_features, const Var& warped_valid) const;

    // pair order is (candidate, real-VIS anchor); not symmetrized
    Var finegrained_disc_forward(const Var& rep_candidate, const Var& rep_anchor) const;

    Var multiscale_disc_low(const Var& ll_band) const;    // 3-channel input
    Var multiscale_disc_high(const Var& high_band) const; // 9-channel input

    struct GenOut {
        PoseOut pose;
        Tensor pred_valid; // [H,W] 0/1, mask head thresholded at 0.5
        TextureOut texture;
        Var warped;  // [32,H,W]
        Var output;  // [3,H,W] in [0,1]
    };
    GenOut generator_forward(const Tensor& image, synthgen::Spectrum spectrum) const;

    Var embed_raw(const Var& image) const;         // unnormalized penultimate features
    Var embed_var(const Var& image) const;         // unit-normalized, differentiable
    Tensor embed(const Tensor& image) const;       // [d]
    Var embed_logits(const Var& image) const;      // [n_classes], for pretraining

    uvgeom::UVField pose_field(const Tensor& image) const; // spec-level wrapper

private:
    void build(uint64_t init_seed);
    void check_res(const Var& image) const;

    NetConfig cfg_;
    ParamSet gen_, disc_, emb_;

    // G_p U-Net
    ConvLayer gp_in_;
    std::vector<ConvLayer> gp_down_, gp_up_;
    ConvLayer gp_bottleneck_, gp_head_;
    // G_t
    std::vector<ConvLayer> gt_enc_;
    FcLayer gt_fc_enc_, gt_fc_dec_;
    std::vector<ConvLayer> gt_dec_;
    ConvLayer gt_feat_, gt_color_;
    // fusion
    ConvLayer fu1_, fu2_, fu3_;
    // D_t
    FcLayer dt1_, dt2_, dt3_;
    // D_rl / D_rh
    std::vector<ConvLayer> drl_conv_, drh_conv_;
    FcLayer drl_fc_, drh_fc_;
    // embedder
    std::vector<ConvLayer> emb_conv_;
    FcLayer emb_fc_, emb_head_;
};

// flat binary container of named tensors and strings
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, std::string>> strings;

    void put(const std::string& name, Tensor t) { tensors.push_back({name, std::move(t)}); }
    void put(const std::string& name, std::string s) { strings.push_back({name, std::move(s)}); }
    const Tensor* tensor(const std::string& name) const;
    const std::string* str(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// model <-> checkpoint (parameters only; the trainer adds its own state)
void store_params(Checkpoint& ck, const Model& m);
void restore_params(Model& m, const Checkpoint& ck);

} // namespace cfc::nets
