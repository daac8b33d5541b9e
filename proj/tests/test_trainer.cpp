#include <doctest.h>

#include <filesystem>
#include <stdexcept>

#include "cfc/synthgen.hpp"
#include "cfc/trainer.hpp"

using namespace cfc;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.seed = 11;
    cfg.image_size = 32;
    cfg.texture_size = 16;
    cfg.n_identities = 4;
    cfg.train_identities = 2;
    cfg.nir_per_identity = 3;
    cfg.vis_per_identity = 2;
    cfg.embed_dim = 16;
    cfg.base_width = 4;
    cfg.fusion_width = 6;
    cfg.disc_width = 4;
    cfg.dt_hidden = 16;
    cfg.embedder_steps = 20;
    cfg.batch_identities = 2;
    cfg.max_steps = 6;
    cfg.eval_every = 1000;
    cfg.uv_warmup_steps = 0;
    cfg.texture_loss_weight = 1.0;
    return cfg;
}

const synthgen::DatasetSplit& tiny_data() {
    static synthgen::DatasetSplit data =
        synthgen::make_dataset(tiny_config().gen_config(), tiny_config().seed);
    return data;
}

uint64_t model_hash(const nets::Model& m) {
    return m.gen_params().value_hash() ^ (m.disc_params().value_hash() * 1099511628211ull) ^
           (m.embed_params().value_hash() * 16777619ull);
}

} // namespace

TEST_CASE("make_state is deterministic") {
    auto s1 = trainer::make_state(tiny_config(), tiny_data());
    auto s2 = trainer::make_state(tiny_config(), tiny_data());
    CHECK(model_hash(*s1.model) == model_hash(*s2.model));
    CHECK(s1.rng.state() == s2.rng.state());
}

TEST_CASE("train_step keeps losses finite and freezes the embedder") {
    auto st = trainer::make_state(tiny_config(), tiny_data());
    uint64_t emb_before = st.model->embed_params().value_hash();
    for (int i = 0; i < 4; ++i) {
        auto batch = trainer::sample_batch(st);
        auto b = trainer::train_step(st, batch);
        for (double v : {b.uv, b.g_t, b.d_t, b.g_f, b.d_f, b.perceptual, b.pixel, b.total_g})
            CHECK(std::isfinite(v));
        CHECK(b.total_g > 0.0);
    }
    CHECK(st.model->embed_params().value_hash() == emb_before);
    CHECK(st.step == 4);
}

TEST_CASE("batch without a VIS anchor is rejected") {
    auto st = trainer::make_state(tiny_config(), tiny_data());
    std::vector<const synthgen::FaceSample*> batch;
    for (const auto& s : st.data->train)
        if (s.spectrum == synthgen::Spectrum::NIR) {
            batch.push_back(&s);
            break;
        }
    REQUIRE(!batch.empty());
    CHECK_THROWS_AS(trainer::train_step(st, batch), std::invalid_argument);
}

TEST_CASE("warmup steps leave the discriminators untouched") {
    RunConfig cfg = tiny_config();
    cfg.uv_warmup_steps = 2;
    auto st = trainer::make_state(cfg, tiny_data());
    uint64_t disc_before = st.model->disc_params().value_hash();
    uint64_t gen_before = st.model->gen_params().value_hash();
    auto batch = trainer::sample_batch(st);
    trainer::train_step(st, batch);
    CHECK(st.model->disc_params().value_hash() == disc_before);
    CHECK(st.model->gen_params().value_hash() != gen_before);
}

TEST_CASE("adversarial step updates both parameter stores") {
    RunConfig cfg = tiny_config();
    cfg.adv_weight = 1.0;
    auto st = trainer::make_state(cfg, tiny_data());
    uint64_t disc_before = st.model->disc_params().value_hash();
    uint64_t gen_before = st.model->gen_params().value_hash();
    auto batch = trainer::sample_batch(st);
    trainer::train_step(st, batch);
    CHECK(st.model->disc_params().value_hash() != disc_before);
    CHECK(st.model->gen_params().value_hash() != gen_before);
}

TEST_CASE("checkpoint round trip resumes bit-exactly") {
    auto a = trainer::make_state(tiny_config(), tiny_data());
    for (int i = 0; i < 2; ++i) trainer::train_step(a, trainer::sample_batch(a));
    fs::path ckpt = fs::temp_directory_path() / "cfc_trainer_test.ckpt";
    trainer::save_state(a, ckpt.string());
    auto b = trainer::load_state(ckpt.string(), tiny_data());
    CHECK(model_hash(*a.model) == model_hash(*b.model));
    CHECK(a.step == b.step);
    CHECK(a.rng.state() == b.rng.state());
    // both continue with one identical step
    auto ba = trainer::train_step(a, trainer::sample_batch(a));
    auto bb = trainer::train_step(b, trainer::sample_batch(b));
    CHECK(ba.total_g == bb.total_g);
    CHECK(model_hash(*a.model) == model_hash(*b.model));
    fs::remove(ckpt);
}

TEST_CASE("synthesize produces an in-range image") {
    auto st = trainer::make_state(tiny_config(), tiny_data());
    const synthgen::FaceSample* nir = nullptr;
    for (const auto& s : st.data->test_probe)
        if (s.spectrum == synthgen::Spectrum::NIR) {
            nir = &s;
            break;
        }
    REQUIRE(nir != nullptr);
    Tensor out = trainer::synthesize(*st.model, nir->image);
    REQUIRE(out.shape == std::vector<int>{3, 32, 32});
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
