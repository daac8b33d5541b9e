#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cfc/config.hpp"
#include "cfc/losses.hpp"
#include "cfc/nets.hpp"
#include "cfc/synthgen.hpp"

namespace cfc::trainer {

struct AdamState {
    std::vector<Tensor> m, v; // parallel to the owning ParamSet
    int64_t t = 0;
};

void adam_init(AdamState& st, const nets::ParamSet& ps);
void adam_update(nets::ParamSet& ps, AdamState& st, double lr, double beta1, double beta2,
                 double eps);

// per-identity training-side material derived from the dataset
struct IdentityData {
    std::vector<int> nir_idx, vis_idx; // indices into split.train
    uvgeom::UVField mean_uv;           // the UV-bar regression target
    int exemplar0 = -1, exemplar1 = -1; // two distinct VIS anchors (frontal first)
};

struct TrainState {
    RunConfig cfg;
    std::unique_ptr<nets::Model> model;
    AdamState adam_g, adam_d;
    Rng rng;
    int64_t step = 0;

    // perceptual-loss stopping machinery
    double perceptual_accum = 0;
    int64_t perceptual_count = 0;
    std::vector<double> eval_history;
    double best_window = 0;
    bool has_best = false;
    int stall = 0;

    // dataset-derived (rebuilt from the dataset, not checkpointed)
    const synthgen::DatasetSplit* data = nullptr;
    std::map<int, IdentityData> per_identity;
    std::vector<int> train_ids;
    std::map<int, Tensor> target_embeds; // frozen-embedder outputs, by train index
};

// Builds the model, prepares per-identity targets and pretrains + freezes the
// identity embedder. The embedder is never touched again by training.
TrainState make_state(const RunConfig& cfg, const synthgen::DatasetSplit& data);

// One discriminator update (D_t, D_rl, D_rh) followed by one generator
// update on the summed generator objective. The batch must contain, for each
// identity present, at least one VIS sample (anchor); throws otherwise.
losses::LossBundle train_step(TrainState& state,
                              const std::vector<const synthgen::FaceSample*>& batch);

// k identities x (1 NIR + 1 VIS), deterministic in state.rng
std::vector<const synthgen::FaceSample*> sample_batch(TrainState& state);

// Full training loop: steps until the windowed perceptual loss stops
// improving or max_steps; writes train_log.csv and checkpoint.ckpt under
// out_dir. Throws (after writing a diagnostic checkpoint) on divergence.
void train(TrainState& state, const std::string& out_dir);

// checkpoint round trip including optimizer moments, RNG and stopping state
void save_state(const TrainState& state, const std::string& path);
TrainState load_state(const std::string& path, const synthgen::DatasetSplit& data);

// loads only what inference needs
std::unique_ptr<nets::Model> load_model(const std::string& path);

// pure inference: F(X) for a NIR input image
Tensor synthesize(const nets::Model& model, const Tensor& nir_image);

} // namespace cfc::trainer
