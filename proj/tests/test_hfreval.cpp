#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "cfc/config.hpp"
#include "cfc/hfreval.hpp"
#include "cfc/rng.hpp"
#include "cfc/synthgen.hpp"
#include "cfc/trainer.hpp"

using namespace cfc;
using hfreval::SimilarityMatrix;

namespace {

SimilarityMatrix random_sim(Rng& rng, int G, int P, int quant = 0) {
    SimilarityMatrix sim;
    sim.scores = Tensor({G, P});
    for (double& v : sim.scores.data) {
        v = rng.uniform(-1.0, 1.0);
        if (quant > 0) v = std::round(v * quant) / quant; // force ties
    }
    for (int g = 0; g < G; ++g) sim.gallery_ids.push_back(g);
    for (int p = 0; p < P; ++p) sim.probe_ids.push_back(static_cast<int>(rng.below(G)));
    return sim;
}

double rank1_oracle(const SimilarityMatrix& sim) {
    int hits = 0;
    for (int p = 0; p < sim.n_probe(); ++p) {
        double best = -std::numeric_limits<double>::infinity();
        int arg = -1;
        for (int g = 0; g < sim.n_gallery(); ++g)
            if (sim.scores.at2(g, p) > best) {
                best = sim.scores.at2(g, p);
                arg = g;
            }
        hits += sim.gallery_ids[arg] == sim.probe_ids[p];
    }
    return static_cast<double>(hits) / sim.n_probe();
}

// exhaustive sweep over all distinct scores; smallest admissible threshold
double vr_oracle(const SimilarityMatrix& sim, double far) {
    std::vector<double> genuine, impostor, all;
    for (int g = 0; g < sim.n_gallery(); ++g)
        for (int p = 0; p < sim.n_probe(); ++p) {
            double s = sim.scores.at2(g, p);
            (sim.gallery_ids[g] == sim.probe_ids[p] ? genuine : impostor).push_back(s);
            all.push_back(s);
        }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    all.push_back(std::nextafter(all.back(), std::numeric_limits<double>::infinity()));
    for (double thr : all) {
        size_t ipass = 0;
        for (double s : impostor) ipass += s >= thr;
        if (static_cast<double>(ipass) / impostor.size() <= far) {
            size_t gpass = 0;
            for (double s : genuine) gpass += s >= thr;
            return static_cast<double>(gpass) / genuine.size();
        }
    }
    return 0.0;
}

} // namespace

TEST_CASE("hfreval: cosine similarity basics and loop oracle") {
    Tensor ex({2}), ey({2});
    ex.data = {1, 0};
    ey.data = {0, 1};
    auto sim = hfreval::similarity_matrix({ex, ey}, {ex}, {0, 1}, {0});
    CHECK(sim.scores.at2(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sim.scores.at2(1, 0) == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(81);
    std::vector<Tensor> gal, prb;
    std::vector<int> gids, pids;
    for (int g = 0; g < 5; ++g) {
        Tensor t({4});
        for (double& v : t.data) v = rng.uniform(-1, 1);
        gal.push_back(t);
        gids.push_back(g);
    }
    for (int p = 0; p < 7; ++p) {
        Tensor t({4});
        for (double& v : t.data) v = rng.uniform(-1, 1);
        prb.push_back(t);
        pids.push_back(p % 5);
    }
    auto S = hfreval::similarity_matrix(gal, prb, gids, pids);
    for (int g = 0; g < 5; ++g)
        for (int p = 0; p < 7; ++p) {
            double dot = 0, ng = 0, np = 0;
            for (int k = 0; k < 4; ++k) {
                dot += gal[g].data[k] * prb[p].data[k];
                ng += gal[g].data[k] * gal[g].data[k];
                np += prb[p].data[k] * prb[p].data[k];
            }
            CHECK(std::fabs(S.scores.at2(g, p) - dot / std::sqrt(ng * np)) < 1e-12);
        }
}

TEST_CASE("hfreval: zero-norm feature rejected with index") {
    Tensor ok({2}), zero({2});
    ok.data = {1, 0};
    try {
        hfreval::similarity_matrix({ok, zero}, {ok}, {0, 1}, {0});
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
}

TEST_CASE("hfreval: rank1 trivial cases, ties, and missing probe id") {
    SimilarityMatrix sim;
    sim.scores = Tensor({3, 3});
    sim.gallery_ids = {0, 1, 2};
    sim.probe_ids = {0, 1, 2};
    for (int i = 0; i < 3; ++i) sim.scores.at2(i, i) = 1.0;
    CHECK(hfreval::rank1(sim) == doctest::Approx(1.0));
    // true gallery always ranked second
    SimilarityMatrix second = sim;
    for (int p = 0; p < 3; ++p)
        for (int g = 0; g < 3; ++g)
            second.scores.at2(g, p) = (g == p) ? 0.5 : (g == (p + 1) % 3 ? 0.9 : 0.0);
    CHECK(hfreval::rank1(second) == doctest::Approx(0.0));
    // all-equal scores: ties resolve to gallery index 0
    SimilarityMatrix tie;
    tie.scores = Tensor({2, 2}, 0.7);
    tie.gallery_ids = {5, 6};
    tie.probe_ids = {5, 6};
    CHECK(hfreval::rank1(tie) == doctest::Approx(0.5));
    tie.probe_ids = {5, 9};
    CHECK_THROWS_AS(hfreval::rank1(tie), std::invalid_argument);
}

TEST_CASE("hfreval: rank1 equals brute-force oracle on 100 random matrices") {
    Rng rng(82);
    for (int k = 0; k < 100; ++k) {
        int G = 2 + static_cast<int>(rng.below(7));
        int P = 1 + static_cast<int>(rng.below(8));
        auto sim = random_sim(rng, G, P, k % 2 ? 8 : 0);
        CHECK(hfreval::rank1(sim) == rank1_oracle(sim));
    }
}

TEST_CASE("hfreval: rank1 invariances (monotone transform, joint row permutation)") {
    Rng rng(83);
    auto sim = random_sim(rng, 5, 9);
    double base = hfreval::rank1(sim);
    SimilarityMatrix warped = sim;
    for (double& v : warped.scores.data) v = std::tanh(3.0 * v) + 2.0; // strictly increasing
    CHECK(hfreval::rank1(warped) == base);
    SimilarityMatrix perm = sim;
    std::vector<int> order = {4, 2, 0, 3, 1};
    for (int g = 0; g < 5; ++g) {
        perm.gallery_ids[g] = sim.gallery_ids[order[g]];
        for (int p = 0; p < 9; ++p) perm.scores.at2(g, p) = sim.scores.at2(order[g], p);
    }
    CHECK(hfreval::rank1(perm) == base);
}

TEST_CASE("hfreval: verification rate trivial and hand-built cases") {
    // separable: genuine 1, impostor 0
    SimilarityMatrix sim;
    sim.scores = Tensor({4, 4});
    sim.gallery_ids = {0, 1, 2, 3};
    sim.probe_ids = {0, 1, 2, 3};
    for (int g = 0; g < 4; ++g)
        for (int p = 0; p < 4; ++p) sim.scores.at2(g, p) = g == p ? 1.0 : 0.0;
    CHECK(hfreval::verification_rate(sim, 0.01) == doctest::Approx(1.0));
    // hand-built 4-genuine / 16-impostor set vs the exhaustive sweep oracle
    Rng rng(84);
    SimilarityMatrix hand;
    hand.scores = Tensor({5, 4});
    hand.gallery_ids = {0, 1, 2, 3, 4};
    hand.probe_ids = {0, 1, 2, 3};
    for (double& v : hand.scores.data) v = std::round(rng.uniform(-1, 1) * 4) / 4;
    for (double far : {0.01, 0.05, 0.1, 0.25, 0.5})
        CHECK(hfreval::verification_rate(hand, far) == vr_oracle(hand, far));
    CHECK_THROWS_AS(hfreval::verification_rate(hand, 0.0), std::invalid_argument);
    // no impostor pairs
    SimilarityMatrix gonly;
    gonly.scores = Tensor({1, 2}, 0.5);
    gonly.gallery_ids = {3};
    gonly.probe_ids = {3, 3};
    CHECK_THROWS_AS(hfreval::verification_rate(gonly, 0.1), std::invalid_argument);
}

TEST_CASE("hfreval: chance-level scores give VR near FAR") {
    // same distribution for genuine and impostor scores
    Rng rng(85);
    SimilarityMatrix sim;
    const int G = 10, P = 200;
    sim.scores = Tensor({G, P});
    for (double& v : sim.scores.data) v = rng.uniform();
    sim.gallery_ids.resize(G);
    for (int g = 0; g < G; ++g) sim.gallery_ids[g] = g;
    for (int p = 0; p < P; ++p) sim.probe_ids.push_back(p % G);
    for (double far : {0.05, 0.1, 0.2})
        CHECK(hfreval::verification_rate(sim, far) == doctest::Approx(far).epsilon(0.5));
}

TEST_CASE("hfreval: agreement with oracles on quantized matrices up to 8x8") {
    Rng rng(86);
    for (int k = 0; k < 60; ++k) {
        int G = 2 + static_cast<int>(rng.below(7));
        int P = 2 + static_cast<int>(rng.below(7));
        auto sim = random_sim(rng, G, P, 4); // coarse grid forces heavy ties
        bool has_imp = false, has_gen = false;
        for (int g = 0; g < G; ++g)
            for (int p = 0; p < P; ++p)
                (sim.gallery_ids[g] == sim.probe_ids[p] ? has_gen : has_imp) = true;
        CHECK(hfreval::rank1(sim) == rank1_oracle(sim));
        if (has_imp && has_gen)
            for (double far : {0.1, 0.3})
                CHECK(hfreval::verification_rate(sim, far) == vr_oracle(sim, far));
    }
}

TEST_CASE("hfreval: ROC is monotone with strictly increasing FAR") {
    Rng rng(87);
    auto sim = random_sim(rng, 6, 40);
    auto roc = hfreval::roc_curve(sim);
    for (size_t i = 1; i < roc.size(); ++i) {
        CHECK(roc[i].first > roc[i - 1].first);
        CHECK(roc[i].second >= roc[i - 1].second);
    }
}

TEST_CASE("hfreval: feature fusion") {
    Tensor a({2}), b({2});
    a.data = {1, 0};
    b.data = {0, 1};
    Tensor f = hfreval::fuse_features(a, b);
    CHECK(f.data[0] == doctest::Approx(0.5));
    CHECK(f.data[1] == doctest::Approx(0.5));
    Tensor same = hfreval::fuse_features(a, a);
    CHECK(same.data == a.data);
    Rng rng(88);
    Tensor x({8}), y({8});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    for (double& v : y.data) v = rng.uniform(-1, 1);
    Tensor m = hfreval::fuse_features(x, y);
    for (int i = 0; i < 8; ++i)
        CHECK(m.data[i] == doctest::Approx(0.5 * (x.data[i] + y.data[i])).epsilon(1e-12));
    CHECK_THROWS_AS(hfreval::fuse_features(a, Tensor({3}, 0.1)), std::invalid_argument);
}

TEST_CASE("hfreval: metrics report CSV round trip is lossless") {
    hfreval::MetricsReport rep;
    rep.rank1 = 0.8125;
    rep.rank1_std = 0.03125;
    rep.vr_at_far[0.01] = 0.71;
    rep.vr_at_far[0.001] = 0.5;
    rep.vr_std[0.01] = 0.01;
    rep.vr_std[0.001] = 0.02;
    rep.roc = {{0.001, 0.5}, {0.01, 0.71}, {0.1, 0.9}};
    hfreval::FoldReport f1;
    f1.rank1 = 0.8;
    f1.vr_at_far[0.01] = 0.7;
    f1.roc = {{0.01, 0.7}};
    rep.per_fold = {f1, f1};
    auto back = hfreval::MetricsReport::from_csv(rep.to_csv());
    CHECK(back.rank1 == rep.rank1);
    CHECK(back.rank1_std == rep.rank1_std);
    CHECK(back.vr_at_far == rep.vr_at_far);
    CHECK(back.vr_std == rep.vr_std);
    CHECK(back.roc == rep.roc);
    REQUIRE(back.per_fold.size() == 2);
    CHECK(back.per_fold[0].rank1 == f1.rank1);
    CHECK(back.per_fold[0].vr_at_far == f1.vr_at_far);
    CHECK(back.per_fold[0].roc == f1.roc);
}

TEST_CASE("hfreval: oracle generator reaches rank1 = 1.0 under mode cfc") {
    // desk-scale dataset; the "generator" is the exact spectral inverse, so
    // probe images become clean VIS renderings (no occluders configured)
    RunConfig cfg;
    cfg.seed = 3;
    cfg.image_size = 32;
    cfg.texture_size = 16;
    cfg.n_identities = 6;
    cfg.train_identities = 4;
    cfg.nir_per_identity = 3;
    cfg.vis_per_identity = 2;
    cfg.max_occluders = 0;
    cfg.yaw_range = 20.0;
    cfg.embedder_steps = 400;
    auto data = synthgen::make_dataset(cfg.gen_config(), cfg.seed);
    std::string dir = "test_hfreval_ds";
    synthgen::write_dataset(data, dir);
    trainer::TrainState st = trainer::make_state(cfg, data); // pretrains the embedder

    hfreval::Synthesizer oracle = [](const Tensor& nir) {
        Tensor out = nir;
        synthgen::spectral_inverse(out);
        for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
        return out;
    };
    auto rep = hfreval::run_protocol(*st.model, dir, dir + "/protocol", hfreval::Mode::Cfc,
                                     oracle);
    CHECK(rep.rank1 == doctest::Approx(1.0));
    CHECK(rep.per_fold.size() == 1);
    CHECK(rep.rank1_std == 0.0); // single fold
    // fusing a feature with itself changes nothing
    Tensor e = st.model->embed(data.test_gallery[0].image);
    CHECK(hfreval::fuse_features(e, e).data == e.data);
    std::filesystem::remove_all(dir);
}
