#include "cfc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cfc/wavelet.hpp"

namespace cfc::trainer {

namespace {

std::string hexdouble(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hexdouble(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

} // namespace

void adam_init(AdamState& st, const nets::ParamSet& ps) {
    st.m.clear();
    st.v.clear();
    st.t = 0;
    for (const auto& [n, p] : ps.entries) {
        st.m.push_back(Tensor(p->value.shape));
        st.v.push_back(Tensor(p->value.shape));
    }
}

void adam_update(nets::ParamSet& ps, AdamState& st, double lr, double beta1, double beta2,
                 double eps) {
    ++st.t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (size_t i = 0; i < ps.entries.size(); ++i) {
        auto& p = ps.entries[i].second;
        if (p->grad.data.empty()) continue;
        for (size_t j = 0; j < p->value.data.size(); ++j) {
            double g = p->grad.data[j];
            double m = st.m[i].data[j] = beta1 * st.m[i].data[j] + (1 - beta1) * g;
            double v = st.v[i].data[j] = beta2 * st.v[i].data[j] + (1 - beta2) * g * g;
            p->value.data[j] -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
        }
    }
}

namespace {

std::map<int, IdentityData> build_identity_data(const synthgen::DatasetSplit& data) {
    std::map<int, IdentityData> out;
    for (size_t i = 0; i < data.train.size(); ++i) {
        const auto& s = data.train[i];
        auto& d = out[s.identity];
        if (s.spectrum == synthgen::Spectrum::NIR)
            d.nir_idx.push_back(static_cast<int>(i));
        else
            d.vis_idx.push_back(static_cast<int>(i));
    }
    for (auto& [id, d] : out) {
        if (d.vis_idx.size() < 2)
            throw std::invalid_argument("identity " + std::to_string(id) +
                                        " needs at least two VIS training images");
        // frontal-most VIS first: that one anchors real pairs and pixel targets
        std::stable_sort(d.vis_idx.begin(), d.vis_idx.end(), [&](int a, int b) {
            auto score = [&](int i) {
                const auto& p = data.train[i].pose;
                return std::fabs(p.yaw_deg) + std::fabs(p.pitch_deg);
            };
            return score(a) < score(b);
        });
        d.exemplar0 = d.vis_idx[0];
        d.exemplar1 = d.vis_idx[1];
        std::vector<uvgeom::UVField> fields;
        for (int i : d.vis_idx) fields.push_back(data.train[i].gt_uv);
        d.mean_uv = uvgeom::mean_uv_field(fields);
    }
    return out;
}

void pretrain_embedder(TrainState& st) {
    // small softmax classifier over the training identities, VIS images only;
    // frozen afterwards (the recognizer the perceptual loss relies on)
    std::vector<std::pair<int, int>> samples; // (train index, class)
    std::map<int, int> id_to_class;
    for (int id : st.train_ids) {
        int c = static_cast<int>(id_to_class.size());
        id_to_class[id] = c;
    }
    std::vector<int> nir_idx;
    for (size_t i = 0; i < st.data->train.size(); ++i) {
        if (st.data->train[i].spectrum == synthgen::Spectrum::VIS)
            samples.push_back({static_cast<int>(i), id_to_class[st.data->train[i].identity]});
        else
            nir_idx.push_back(static_cast<int>(i));
    }
    AdamState opt;
    adam_init(opt, st.model->embed_params());
    Rng rng = Rng::child(st.cfg.seed, 0xE3BEDDE7);
    const int batch = 16;
    for (int step = 0; step < st.cfg.embedder_steps; ++step) {
        std::vector<ad::Var> terms;
        for (int b = 0; b < batch; ++b) {
            auto& [idx, label] = samples[rng.below(samples.size())];
            Tensor img = st.data->train[idx].image;
            if (st.cfg.embedder_noise > 0.0)
                for (double& v : img.data) {
                    v += st.cfg.embedder_noise * rng.normal();
                    v = std::min(1.0, std::max(0.0, v));
                }
            ad::Var logits = st.model->embed_logits(ad::constant(img));
            terms.push_back(ad::softmax_ce(logits, label));
            // drive out-of-domain (NIR) features toward zero so feature-level
            // fusion is dominated by the in-domain source
            if (st.cfg.embedder_nir_suppress > 0.0 && !nir_idx.empty()) {
                const Tensor& nimg = st.data->train[nir_idx[rng.below(nir_idx.size())]].image;
                Tensor zero({st.cfg.embed_dim}, 0.0);
                terms.push_back(
                    ad::scale(losses::squared_distance(
                                  st.model->embed_raw(ad::constant(nimg)), zero),
                              st.cfg.embedder_nir_suppress));
            }
        }
        ad::Var loss = ad::scale(ad::add_n(terms), 1.0 / batch);
        ad::backward(loss);
        adam_update(st.model->embed_params(), opt, st.cfg.embedder_lr, 0.9, 0.999, 1e-8);
        st.model->embed_params().zero_grads();
    }
}

} // namespace

TrainState make_state(const RunConfig& cfg, const synthgen::DatasetSplit& data) {
    TrainState st;
    st.cfg = cfg;
    st.data = &data;
    st.per_identity = build_identity_data(data);
    for (const auto& [id, d] : st.per_identity) st.train_ids.push_back(id);
    st.model = std::make_unique<nets::Model>(
        nets::NetConfig::from_run(cfg, static_cast<int>(st.train_ids.size())), cfg.seed);
    adam_init(st.adam_g, st.model->gen_params());
    adam_init(st.adam_d, st.model->disc_params());
    st.rng = Rng::child(cfg.seed, 0x7A31);
    pretrain_embedder(st);
    return st;
}

std::vector<const synthgen::FaceSample*> sample_batch(TrainState& state) {
    int k = std::min<int>(state.cfg.batch_identities, static_cast<int>(state.train_ids.size()));
    // partial Fisher-Yates for k distinct identities
    std::vector<int> ids = state.train_ids;
    for (int i = 0; i < k; ++i) {
        int j = i + static_cast<int>(state.rng.below(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    std::vector<const synthgen::FaceSample*> batch;
    for (int i = 0; i < k; ++i) {
        const auto& d = state.per_identity.at(ids[i]);
        batch.push_back(&state.data->train[d.nir_idx[state.rng.below(d.nir_idx.size())]]);
        batch.push_back(&state.data->train[d.vis_idx[state.rng.below(d.vis_idx.size())]]);
    }
    return batch;
}

losses::LossBundle train_step(TrainState& state,
                              const std::vector<const synthgen::FaceSample*>& batch) {
    using synthgen::Spectrum;
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const RunConfig& cfg = state.cfg;
    nets::Model& model = *state.model;
    const double eps = cfg.prob_clamp_eps;

    // pre: every identity in the batch has a VIS anchor
    std::set<int> ids_in_batch, ids_with_vis;
    for (const auto* s : batch) {
        ids_in_batch.insert(s->identity);
        if (s->spectrum == Spectrum::VIS) ids_with_vis.insert(s->identity);
    }
    for (int id : ids_in_batch)
        if (!ids_with_vis.count(id))
            throw std::invalid_argument("train_step: batch lacks a VIS anchor for identity " +
                                        std::to_string(id));

    bool warmup = state.step < cfg.uv_warmup_steps;
    bool use_gan = cfg.adv_weight > 0.0 && !warmup;

    // anchor representations per identity (two distinct real VIS images)
    std::map<int, std::pair<Tensor, Tensor>> anchors;
    if (use_gan) for (int id : ids_in_batch) {
        const auto& d = state.per_identity.at(id);
        Tensor r0 =
            model.texture_rep(ad::constant(state.data->train[d.exemplar0].image), Spectrum::VIS)
                ->value;
        Tensor r1 =
            model.texture_rep(ad::constant(state.data->train[d.exemplar1].image), Spectrum::VIS)
                ->value;
        anchors[id] = {std::move(r0), std::move(r1)};
    }

    // one generator graph per batch sample; shared between the D fakes
    // (as detached values) and the G update (with gradients)
    struct Input {
        const synthgen::FaceSample* s;
        nets::Model::GenOut gen;
    };
    std::vector<Input> inputs;
    inputs.reserve(batch.size());
    for (const auto* s : batch) inputs.push_back({s, model.generator_forward(s->image, s->spectrum)});

    losses::LossBundle bundle;
    bundle.lambda = cfg.lambda_high;
    bundle.alpha = cfg.alpha_pixel;

    // ---------------- discriminator sub-step ----------------
    if (use_gan) {
        std::vector<ad::Var> dt_terms;
        for (const auto& in : inputs) {
            if (in.s->spectrum != Spectrum::NIR) continue;
            const auto& [r0, r1] = anchors.at(in.s->identity);
            ad::Var fake = model.finegrained_disc_forward(
                ad::constant(in.gen.texture.rep->value), ad::constant(r0));
            ad::Var real = model.finegrained_disc_forward(ad::constant(r1), ad::constant(r0));
            dt_terms.push_back(
                ad::add(losses::neg_log_one_minus(fake, eps), losses::neg_log_prob(real, eps)));
        }
        std::vector<ad::Var> low_real, low_fake, high_real, high_fake;
        for (const auto& in : inputs) {
            if (in.s->spectrum == Spectrum::VIS) {
                auto bands = wavelet::split_bands(wavelet::haar_decompose(in.s->image));
                low_real.push_back(losses::neg_log_prob(
                    model.multiscale_disc_low(ad::constant(bands.low)), eps));
                high_real.push_back(losses::neg_log_prob(
                    model.multiscale_disc_high(ad::constant(bands.high)), eps));
            }
            auto fb = wavelet::split_bands(wavelet::haar_decompose(in.gen.output->value));
            low_fake.push_back(losses::neg_log_one_minus(
                model.multiscale_disc_low(ad::constant(fb.low)), eps));
            high_fake.push_back(losses::neg_log_one_minus(
                model.multiscale_disc_high(ad::constant(fb.high)), eps));
        }
        ad::Var dt_var = ad::scale(ad::add_n(dt_terms), 1.0 / dt_terms.size());
        ad::Var df_var = ad::add(
            ad::add(ad::scale(ad::add_n(low_real), 1.0 / low_real.size()),
                    ad::scale(ad::add_n(low_fake), 1.0 / low_fake.size())),
            ad::add(ad::scale(ad::add_n(high_real), 1.0 / high_real.size()),
                    ad::scale(ad::add_n(high_fake), 1.0 / high_fake.size())));
        bundle.d_t = dt_var->value.data[0];
        bundle.d_f = df_var->value.data[0];
        ad::backward(ad::add(dt_var, df_var));
        adam_update(model.disc_params(), state.adam_d, cfg.lr, cfg.beta1, cfg.beta2,
                    cfg.adam_eps);
        model.disc_params().zero_grads();
        model.gen_params().zero_grads(); // generator gradients from the D pass are discarded
    }

    // ---------------- generator sub-step ----------------
    {
        std::vector<ad::Var> uv_terms, tex_terms, gt_terms, gf_terms, perc_terms, pix_terms;
        for (const auto& in : inputs) {
            const auto& d = state.per_identity.at(in.s->identity);
            ad::Var uv = losses::masked_mean_abs(in.gen.pose.coords, d.mean_uv.coords,
                                                 d.mean_uv.valid);
            ad::Var mb = ad::scale(losses::mask_bce(in.gen.pose.mask_logit, d.mean_uv.valid),
                                   cfg.mask_loss_weight);
            uv_terms.push_back(ad::add(uv, mb));
            if (cfg.texture_loss_weight > 0.0) {
                auto t = state.data->textures.find(in.s->identity);
                if (t == state.data->textures.end())
                    throw std::invalid_argument(
                        "train_step: texture_loss_weight > 0 but the dataset has no "
                        "canonical texture for identity " +
                        std::to_string(in.s->identity));
                Tensor tex_ones({cfg.texture_size, cfg.texture_size}, 1.0);
                tex_terms.push_back(
                    ad::scale(losses::masked_mean_abs(in.gen.texture.color, t->second, tex_ones),
                              cfg.texture_loss_weight));
            }
            if (warmup) continue;
            if (use_gan) {
                if (in.s->spectrum == Spectrum::NIR) {
                    const auto& [r0, r1] = anchors.at(in.s->identity);
                    ad::Var fake = model.finegrained_disc_forward(in.gen.texture.rep,
                                                                  ad::constant(r0));
                    gt_terms.push_back(losses::neg_log_prob(fake, eps));
                }
                ad::Var low = model.multiscale_disc_low(ad::haar_ll(in.gen.output));
                ad::Var high = model.multiscale_disc_high(ad::haar_high(in.gen.output));
                gf_terms.push_back(ad::add(losses::neg_log_prob(low, eps),
                                           ad::scale(losses::neg_log_prob(high, eps),
                                                     cfg.lambda_high)));
            }
            // perceptual target is always the matched frontal VIS exemplar
            const Tensor& vis_anchor = state.data->train[d.exemplar0].image;
            auto cached = state.target_embeds.find(d.exemplar0);
            if (cached == state.target_embeds.end())
                cached = state.target_embeds
                             .emplace(d.exemplar0,
                                      model.embed_var(ad::constant(vis_anchor))->value)
                             .first;
            perc_terms.push_back(
                ad::scale(losses::squared_distance(model.embed_var(in.gen.output),
                                                   cached->second),
                          cfg.perceptual_weight));
            int target_idx = cfg.pixel_target == "matched_vis"
                                 ? d.exemplar0
                                 : static_cast<int>(in.s - state.data->train.data());
            const Tensor& target = state.data->train[target_idx].image;
            Tensor ones({cfg.image_size, cfg.image_size}, 1.0);
            ad::Var pix = ad::scale(losses::masked_mean_abs(in.gen.output, target, ones),
                                    cfg.alpha_pixel);
            if (cfg.recon_weight > 0.0)
                pix = ad::add(pix,
                              ad::scale(losses::masked_mean_abs(in.gen.output, vis_anchor, ones),
                                        cfg.recon_weight));
            pix_terms.push_back(pix);
        }
        auto mean_of = [](const std::vector<ad::Var>& v) {
            return ad::scale(ad::add_n(v), 1.0 / v.size());
        };
        ad::Var uv_var = mean_of(uv_terms);
        bundle.uv = uv_var->value.data[0];
        ad::Var total = uv_var;
        std::vector<ad::Var> warm_parts = {uv_var};
        if (!tex_terms.empty()) {
            // decoded-texture supervision; reported in the pixel column since
            // both are L1 reconstruction terms
            ad::Var tex_var = mean_of(tex_terms);
            bundle.pixel += tex_var->value.data[0];
            warm_parts.push_back(tex_var);
        }
        if (warmup && warm_parts.size() > 1) total = ad::add_n(warm_parts);
        if (!warmup) {
            ad::Var perc_var = mean_of(perc_terms);
            ad::Var pix_var = mean_of(pix_terms);
            bundle.perceptual = perc_var->value.data[0];
            bundle.pixel += pix_var->value.data[0];
            std::vector<ad::Var> parts = warm_parts;
            parts.push_back(perc_var);
            parts.push_back(pix_var);
            if (use_gan) {
                // reported adversarial components carry adv_weight so that
                // total_g stays the plain sum of the five terms
                ad::Var gt_var = ad::scale(mean_of(gt_terms), cfg.adv_weight);
                ad::Var gf_var = ad::scale(mean_of(gf_terms), cfg.adv_weight);
                bundle.g_t = gt_var->value.data[0];
                bundle.g_f = gf_var->value.data[0];
                parts.push_back(gt_var);
                parts.push_back(gf_var);
            }
            total = ad::add_n(parts);
        }
        bundle.total_g = total->value.data[0];
        ad::backward(total);
        adam_update(model.gen_params(), state.adam_g, cfg.lr, cfg.beta1, cfg.beta2,
                    cfg.adam_eps);
        model.gen_params().zero_grads();
        model.disc_params().zero_grads();  // D sees generator losses only through values
        model.embed_params().zero_grads(); // embedder is frozen; drop its gradients
    }

    ++state.step;
    return bundle;
}

namespace {

bool bundle_finite(const losses::LossBundle& b) {
    for (double v : {b.uv, b.g_t, b.d_t, b.g_f, b.d_f, b.perceptual, b.pixel, b.total_g})
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace

void train(TrainState& state, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream cfg_out(out_dir + "/config.resolved.txt");
        cfg_out << state.cfg.to_text();
        cfg_out << "# content_hash = " << state.cfg.content_hash() << "\n";
    }
    std::ofstream log(out_dir + "/train_log.csv",
                      state.step == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("train: cannot open log in " + out_dir);
    log.precision(17);
    if (state.step == 0)
        log << "step,uv,g_t,d_t,g_f,d_f,perceptual,pixel,total_g\n";

    while (state.step < state.cfg.max_steps) {
        auto batch = sample_batch(state);
        losses::LossBundle b = train_step(state, batch);
        log << state.step << ',' << b.uv << ',' << b.g_t << ',' << b.d_t << ',' << b.g_f << ','
            << b.d_f << ',' << b.perceptual << ',' << b.pixel << ',' << b.total_g << '\n';
        if (!bundle_finite(b)) {
            save_state(state, out_dir + "/diverged.ckpt");
            throw std::runtime_error("train: loss diverged at step " +
                                     std::to_string(state.step) +
                                     "; diagnostic checkpoint written");
        }
        state.perceptual_accum += b.perceptual;
        ++state.perceptual_count;
        if (state.step % state.cfg.eval_every == 0) {
            state.eval_history.push_back(state.perceptual_accum / state.perceptual_count);
            state.perceptual_accum = 0;
            state.perceptual_count = 0;
            size_t w = std::min<size_t>(10, state.eval_history.size());
            double window = 0;
            for (size_t i = state.eval_history.size() - w; i < state.eval_history.size(); ++i)
                window += state.eval_history[i];
            window /= w;
            if (!state.has_best ||
                window < state.best_window * (1.0 - state.cfg.min_rel_improve)) {
                state.best_window = window;
                state.has_best = true;
                state.stall = 0;
            } else {
                ++state.stall;
            }
            if (state.stall >= state.cfg.patience) break; // perceptual loss stopped improving
        }
    }
    save_state(state, out_dir + "/checkpoint.ckpt");
}

void save_state(const TrainState& state, const std::string& path) {
    nets::Checkpoint ck;
    nets::store_params(ck, *state.model);
    ck.put("config", state.cfg.to_text());
    ck.put("config_hash", state.cfg.content_hash());
    auto put_adam = [&](const char* prefix, const AdamState& st, const nets::ParamSet& ps) {
        for (size_t i = 0; i < ps.entries.size(); ++i) {
            ck.put(std::string(prefix) + ".m/" + ps.entries[i].first, st.m[i]);
            ck.put(std::string(prefix) + ".v/" + ps.entries[i].first, st.v[i]);
        }
        ck.put(std::string(prefix) + ".t", std::to_string(st.t));
    };
    put_adam("adam_g", state.adam_g, state.model->gen_params());
    put_adam("adam_d", state.adam_d, state.model->disc_params());
    ck.put("step", std::to_string(state.step));
    ck.put("rng", std::to_string(state.rng.state()));
    ck.put("perceptual_accum", hexdouble(state.perceptual_accum));
    ck.put("perceptual_count", std::to_string(state.perceptual_count));
    std::ostringstream hist;
    for (double v : state.eval_history) hist << hexdouble(v) << ",";
    ck.put("eval_history", hist.str());
    ck.put("best_window", hexdouble(state.best_window));
    ck.put("has_best", state.has_best ? "1" : "0");
    ck.put("stall", std::to_string(state.stall));
    ck.save(path);
}

TrainState load_state(const std::string& path, const synthgen::DatasetSplit& data) {
    nets::Checkpoint ck = nets::Checkpoint::load(path);
    const std::string* cfg_text = ck.str("config");
    const std::string* arch = ck.str("arch");
    if (!cfg_text || !arch) throw std::runtime_error("checkpoint missing config/arch");
    TrainState st;
    st.cfg = RunConfig::from_text(*cfg_text);
    st.data = &data;
    st.per_identity = build_identity_data(data);
    for (const auto& [id, d] : st.per_identity) st.train_ids.push_back(id);
    st.model = std::make_unique<nets::Model>(nets::NetConfig::from_descriptor(*arch), 0);
    nets::restore_params(*st.model, ck);
    auto get_adam = [&](const char* prefix, AdamState& ad_st, const nets::ParamSet& ps) {
        adam_init(ad_st, ps);
        for (size_t i = 0; i < ps.entries.size(); ++i) {
            const Tensor* m = ck.tensor(std::string(prefix) + ".m/" + ps.entries[i].first);
            const Tensor* v = ck.tensor(std::string(prefix) + ".v/" + ps.entries[i].first);
            if (!m || !v) throw std::runtime_error("checkpoint missing optimizer state");
            ad_st.m[i] = *m;
            ad_st.v[i] = *v;
        }
        ad_st.t = std::stoll(*ck.str(std::string(prefix) + ".t"));
    };
    get_adam("adam_g", st.adam_g, st.model->gen_params());
    get_adam("adam_d", st.adam_d, st.model->disc_params());
    st.step = std::stoll(*ck.str("step"));
    st.rng.set_state(std::stoull(*ck.str("rng")));
    st.perceptual_accum = parse_hexdouble(*ck.str("perceptual_accum"));
    st.perceptual_count = std::stoll(*ck.str("perceptual_count"));
    std::istringstream hist(*ck.str("eval_history"));
    std::string tok;
    while (std::getline(hist, tok, ','))
        if (!tok.empty()) st.eval_history.push_back(parse_hexdouble(tok));
    st.best_window = parse_hexdouble(*ck.str("best_window"));
    st.has_best = *ck.str("has_best") == "1";
    st.stall = std::stoi(*ck.str("stall"));
    return st;
}

std::unique_ptr<nets::Model> load_model(const std::string& path) {
    nets::Checkpoint ck = nets::Checkpoint::load(path);
    const std::string* arch = ck.str("arch");
    if (!arch) throw std::runtime_error("checkpoint missing arch descriptor");
    auto model = std::make_unique<nets::Model>(nets::NetConfig::from_descriptor(*arch), 0);
    nets::restore_params(*model, ck);
    return model;
}

Tensor synthesize(const nets::Model& model, const Tensor& nir_image) {
    return model.generator_forward(nir_image, synthgen::Spectrum::NIR).output->value;
}

} // namespace cfc::trainer
