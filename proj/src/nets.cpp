#include "cfc/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfc::nets {

namespace {

int ilog2(int v) {
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}

Tensor normal_init(Rng& rng, std::vector<int> shape, int fan_in) {
    Tensor t(shape);
    double s = std::sqrt(2.0 / fan_in);
    for (double& v : t.data) v = s * rng.normal();
    return t;
}

} // namespace

NetConfig NetConfig::from_run(const RunConfig& rc, int n_classes) {
    NetConfig c;
    c.resolution = rc.image_size;
    c.texture_size = rc.texture_size;
    c.embed_dim = rc.embed_dim;
    c.base_width = rc.base_width;
    c.feature_channels = rc.feature_channels;
    c.fusion_width = rc.fusion_width;
    c.disc_width = rc.disc_width;
    c.dt_hidden = rc.dt_hidden;
    c.n_classes = n_classes;
    return c;
}

std::string NetConfig::descriptor() const {
    std::ostringstream ss;
    ss << "resolution=" << resolution << "\ntexture_size=" << texture_size
       << "\nembed_dim=" << embed_dim << "\nbase_width=" << base_width
       << "\nfeature_channels=" << feature_channels << "\nfusion_width=" << fusion_width
       << "\ndisc_width=" << disc_width << "\ndt_hidden=" << dt_hidden
       << "\nn_classes=" << n_classes << "\n";
    return ss.str();
}

NetConfig NetConfig::from_descriptor(const std::string& text) {
    NetConfig c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("bad architecture descriptor line: " + line);
        std::string key = line.substr(0, eq);
        int v = std::stoi(line.substr(eq + 1));
        if (key == "resolution") c.resolution = v;
        else if (key == "texture_size") c.texture_size = v;
        else if (key == "embed_dim") c.embed_dim = v;
        else if (key == "base_width") c.base_width = v;
        else if (key == "feature_channels") c.feature_channels = v;
        else if (key == "fusion_width") c.fusion_width = v;
        else if (key == "disc_width") c.disc_width = v;
        else if (key == "dt_hidden") c.dt_hidden = v;
        else if (key == "n_classes") c.n_classes = v;
        else throw std::invalid_argument("unknown descriptor key: " + key);
    }
    return c;
}

Var ParamSet::add(const std::string& name, Tensor init) {
    auto v = ad::leaf(std::move(init));
    entries.push_back({name, v});
    return v;
}

Var ParamSet::find(const std::string& name) const {
    for (const auto& [n, v] : entries)
        if (n == name) return v;
    throw std::out_of_range("no such parameter: " + name);
}

void ParamSet::zero_grads() {
    for (auto& [n, v] : entries)
        if (!v->grad.data.empty()) std::fill(v->grad.data.begin(), v->grad.data.end(), 0.0);
}

uint64_t ParamSet::value_hash() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& [n, v] : entries) {
        for (unsigned char c : n) {
            h ^= c;
            h *= 0x100000001B3ull;
        }
        const auto* bytes = reinterpret_cast<const unsigned char*>(v->value.data.data());
        for (size_t i = 0; i < v->value.data.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

namespace {

ConvLayer make_conv(ParamSet& ps, Rng& rng, const std::string& name, int ci, int co, int k,
                    int stride, int pad) {
    ConvLayer l;
    l.w = ps.add(name + ".w", normal_init(rng, {co, ci, k, k}, ci * k * k));
    l.b = ps.add(name + ".b", Tensor({co}));
    l.stride = stride;
    l.pad = pad;
    return l;
}

FcLayer make_fc(ParamSet& ps, Rng& rng, const std::string& name, int in, int out) {
    FcLayer l;
    l.w = ps.add(name + ".w", normal_init(rng, {out, in}, in));
    l.b = ps.add(name + ".b", Tensor({out}));
    return l;
}

int width(int base, int i) { return std::min(base << i, 48); }

} // namespace

Model::Model(const NetConfig& cfg, uint64_t init_seed) : cfg_(cfg) { build(init_seed); }

void Model::build(uint64_t init_seed) {
    Rng rng = Rng::child(init_seed, 0x11E75);
    const int R = cfg_.resolution;
    const int B = cfg_.base_width;

    // ---- G_p: U-Net, R -> R/4... -> R with skip connections ----
    int S = ilog2(R) - 4; // down stages (bottleneck at R / 2^S)
    gp_in_ = make_conv(gen_, rng, "gp.in", 3, width(B, 0), 3, 1, 1);
    for (int i = 0; i < S; ++i)
        gp_down_.push_back(
            make_conv(gen_, rng, "gp.down" + std::to_string(i), width(B, i), width(B, i + 1), 3, 2, 1));
    gp_bottleneck_ = make_conv(gen_, rng, "gp.bottleneck", width(B, S), width(B, S), 3, 1, 1);
    for (int i = S - 1; i >= 0; --i)
        gp_up_.push_back(make_conv(gen_, rng, "gp.up" + std::to_string(i),
                                   width(B, i + 1) + width(B, i), width(B, i), 3, 1, 1));
    gp_head_ = make_conv(gen_, rng, "gp.head", width(B, 0), 3, 3, 1, 1);

    // ---- G_t: encoder to 8x8, fc bottleneck, decoder to the texture size ----
    int E = ilog2(R) - 3;
    int ci = 4; // RGB + spectrum indicator plane
    for (int i = 0; i < E; ++i) {
        gt_enc_.push_back(make_conv(gen_, rng, "gt.enc" + std::to_string(i), ci, width(B, i + 1), 3, 2, 1));
        ci = width(B, i + 1);
    }
    // global average pool before the bottleneck: the rep depends on pooled
    // channel statistics, which generalizes across pose far better than a
    // flattened spatial map
    gt_fc_enc_ = make_fc(gen_, rng, "gt.fc_enc", ci, cfg_.embed_dim);
    int wd = ci;
    gt_fc_dec_ = make_fc(gen_, rng, "gt.fc_dec", cfg_.embed_dim, wd * 8 * 8);
    int T = ilog2(cfg_.texture_size) - 3;
    int dc = wd;
    for (int i = 0; i < T; ++i) {
        int nc = std::max(wd >> (i + 1), 8);
        gt_dec_.push_back(make_conv(gen_, rng, "gt.dec" + std::to_string(i), dc, nc, 3, 1, 1));
        dc = nc;
    }
    gt_feat_ = make_conv(gen_, rng, "gt.feat", dc, cfg_.feature_channels, 3, 1, 1);
    gt_color_ = make_conv(gen_, rng, "gt.color", cfg_.feature_channels, 3, 3, 1, 1);

    // ---- fusion warping net ----
    int F = cfg_.fusion_width;
    fu1_ = make_conv(gen_, rng, "fuse.c1", cfg_.feature_channels + 1, F, 1, 1, 0);
    fu2_ = make_conv(gen_, rng, "fuse.c2", F, F, 3, 1, 1);
    fu3_ = make_conv(gen_, rng, "fuse.c3", F, 3, 3, 1, 1);

    // ---- D_t on representation pairs ----
    dt1_ = make_fc(disc_, rng, "dt.fc1", 2 * cfg_.embed_dim, cfg_.dt_hidden);
    dt2_ = make_fc(disc_, rng, "dt.fc2", cfg_.dt_hidden, cfg_.dt_hidden);
    dt3_ = make_fc(disc_, rng, "dt.fc3", cfg_.dt_hidden, 1);

    // ---- D_rl / D_rh on wavelet bands (input at R/2) ----
    int D = ilog2(R / 2) - 3;
    const int W = cfg_.disc_width;
    auto build_band = [&](std::vector<ConvLayer>& convs, FcLayer& fc, const std::string& p,
                          int cin) {
        int c = cin;
        for (int i = 0; i < D; ++i) {
            convs.push_back(make_conv(disc_, rng, p + ".conv" + std::to_string(i), c,
                                      width(W, i + 1), 3, 2, 1));
            c = width(W, i + 1);
        }
        fc = make_fc(disc_, rng, p + ".fc", c * 8 * 8, 1);
    };
    build_band(drl_conv_, drl_fc_, "drl", 3);
    build_band(drh_conv_, drh_fc_, "drh", 9);

    // ---- identity embedder ----
    int ec = 3;
    for (int i = 0; i < E; ++i) {
        emb_conv_.push_back(make_conv(emb_, rng, "emb.conv" + std::to_string(i), ec, width(B, i + 1), 3, 2, 1));
        ec = width(B, i + 1);
    }
    emb_fc_ = make_fc(emb_, rng, "emb.fc", ec, cfg_.embed_dim);
    emb_head_ = make_fc(emb_, rng, "emb.head", cfg_.embed_dim, cfg_.n_classes);
}

void Model::check_res(const Var& image) const {
    const auto& s = image->value.shape;
    if (s.size() != 3 || s[1] != cfg_.resolution || s[2] != cfg_.resolution)
        throw std::invalid_argument("input resolution does not match the model config");
}

Model::PoseOut Model::pose_net_forward(const Var& image) const {
    check_res(image);
    if (image->value.shape[0] != 3)
        throw std::invalid_argument("pose_net_forward: need a 3-channel image");
    std::vector<Var> skips;
    Var x = ad::leaky_relu(gp_in_(image));
    for (const auto& down : gp_down_) {
        skips.push_back(x);
        x = ad::leaky_relu(down(x));
    }
    x = ad::leaky_relu(gp_bottleneck_(x));
    for (size_t i = 0; i < gp_up_.size(); ++i) {
        x = ad::upsample2(x);
        x = ad::concat_c(x, skips[skips.size() - 1 - i]);
        x = ad::leaky_relu(gp_up_[i](x));
    }
    Var head = gp_head_(x);
    PoseOut out;
    out.coords = ad::sigmoid(ad::slice_c(head, 0, 2));
    out.mask_logit = ad::slice_c(head, 2, 3);
    return out;
}

Var Model::texture_rep(const Var& image, synthgen::Spectrum spectrum) const {
    check_res(image);
    Tensor plane({1, cfg_.resolution, cfg_.resolution},
                 spectrum == synthgen::Spectrum::VIS ? 1.0 : 0.0);
    Var x = ad::concat_c(image, ad::constant(plane));
    for (const auto& enc : gt_enc_) x = ad::leaky_relu(enc(x));
    return ad::tanh_(gt_fc_enc_(ad::spatial_mean(x)));
}

Model::TextureOut Model::texture_net_forward(const Var& image, synthgen::Spectrum spectrum) const {
    Var rep = texture_rep(image, spectrum);
    int wd = gt_enc_.back().w->value.shape[0];
    Var d = ad::leaky_relu(ad::reshape(gt_fc_dec_(rep), {wd, 8, 8}));
    for (const auto& dec : gt_dec_) d = ad::leaky_relu(dec(ad::upsample2(d)));
    Var features = ad::leaky_relu(gt_feat_(d));
    TextureOut out;
    out.rep = rep;
    out.features = features;
    out.color = ad::sigmoid(gt_color_(features));
    return out;
}

Var Model::fusion_forward(const Var& warped_features, const Var& warped_valid) const {
    const auto& s = warped_features->value.shape;
    if (s.size() != 3 || s[0] != cfg_.feature_channels)
        throw std::invalid_argument("fusion_forward: feature channel mismatch");
    Var x = ad::concat_c(warped_features, warped_valid);
    x = ad::leaky_relu(fu1_(x));
    x = ad::leaky_relu(fu2_(x));
    return ad::sigmoid(fu3_(x));
}

Var Model::finegrained_disc_forward(const Var& rep_candidate, const Var& rep_anchor) const {
    int d = cfg_.embed_dim;
    if (rep_candidate->value.numel() != d || rep_anchor->value.numel() != d)
        throw std::invalid_argument("finegrained_disc_forward: representation length mismatch");
    Var a = ad::reshape(rep_candidate, {d, 1, 1});
    Var b = ad::reshape(rep_anchor, {d, 1, 1});
    Var x = ad::reshape(ad::concat_c(a, b), {2 * d});
    x = ad::leaky_relu(dt1_(x));
    x = ad::leaky_relu(dt2_(x));
    return ad::sigmoid(dt3_(x));
}

namespace {
Var band_disc(const std::vector<ConvLayer>& convs, const FcLayer& fc, const Var& band) {
    Var x = band;
    for (const auto& c : convs) x = ad::leaky_relu(c(x));
    return ad::sigmoid(fc(ad::reshape(x, {static_cast<int>(x->value.numel())})));
}
} // namespace

Var Model::multiscale_disc_low(const Var& ll_band) const {
    const auto& s = ll_band->value.shape;
    if (s.size() != 3 || s[0] != 3 || s[1] != cfg_.resolution / 2)
        throw std::invalid_argument("multiscale_disc_low: band shape mismatch");
    return band_disc(drl_conv_, drl_fc_, ll_band);
}

Var Model::multiscale_disc_high(const Var& high_band) const {
    const auto& s = high_band->value.shape;
    if (s.size() != 3 || s[0] != 9 || s[1] != cfg_.resolution / 2)
        throw std::invalid_argument("multiscale_disc_high: band shape mismatch");
    return band_disc(drh_conv_, drh_fc_, high_band);
}

Model::GenOut Model::generator_forward(const Tensor& image, synthgen::Spectrum spectrum) const {
    Var img = ad::constant(image);
    GenOut out;
    out.pose = pose_net_forward(img);
    int H = cfg_.resolution;
    out.pred_valid = Tensor({H, H});
    for (int i = 0; i < H * H; ++i)
        out.pred_valid.data[i] = out.pose.mask_logit->value.data[i] > 0.0 ? 1.0 : 0.0;
    out.texture = texture_net_forward(img, spectrum);
    out.warped = ad::grid_sample(out.texture.features, out.pose.coords, out.pred_valid);
    Tensor plane = out.pred_valid;
    plane.shape = {1, H, H};
    out.output = fusion_forward(out.warped, ad::constant(plane));
    return out;
}

Var Model::embed_raw(const Var& image) const {
    check_res(image);
    Var x = image;
    for (const auto& c : emb_conv_) x = ad::leaky_relu(c(x));
    return emb_fc_(ad::spatial_mean(x));
}

// the identity representation is the unit-normalized penultimate feature
// vector, keeping the perceptual loss on an O(1) scale
Var Model::embed_var(const Var& image) const { return ad::l2_normalize(embed_raw(image)); }

// evaluation features are the raw penultimate vector: cosine scoring is
// norm-invariant, and feature-level fusion then weights each source by its
// feature energy instead of equalizing a weak NIR embedding with a strong
// synthesized one
Tensor Model::embed(const Tensor& image) const { return embed_raw(ad::constant(image))->value; }

Var Model::embed_logits(const Var& image) const {
    return emb_head_(ad::leaky_relu(embed_raw(image)));
}

uvgeom::UVField Model::pose_field(const Tensor& image) const {
    PoseOut p = pose_net_forward(ad::constant(image));
    uvgeom::UVField f;
    f.coords = p.coords->value;
    int H = cfg_.resolution;
    f.valid = Tensor({H, H});
    for (int i = 0; i < H * H; ++i)
        f.valid.data[i] = p.mask_logit->value.data[i] > 0.0 ? 1.0 : 0.0;
    return f;
}

// ----------------------------------------------------------------- container

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
void write_name(std::ostream& out, const std::string& s) {
    write_pod<uint16_t>(out, static_cast<uint16_t>(s.size()));
    out.write(s.data(), s.size());
}
std::string read_name(std::istream& in) {
    auto n = read_pod<uint16_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

} // namespace

const Tensor* Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

const std::string* Checkpoint::str(const std::string& name) const {
    for (const auto& [n, s] : strings)
        if (n == name) return &s;
    return nullptr;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
    out.write("CFCCKPT1", 8);
    write_pod<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_name(out, name);
        write_pod<uint8_t>(out, static_cast<uint8_t>(t.shape.size()));
        for (int d : t.shape) write_pod<uint32_t>(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
    }
    write_pod<uint32_t>(out, static_cast<uint32_t>(strings.size()));
    for (const auto& [name, s] : strings) {
        write_name(out, name);
        write_pod<uint64_t>(out, s.size());
        out.write(s.data(), s.size());
    }
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "CFCCKPT1", 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ck;
    auto nt = read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < nt; ++i) {
        std::string name = read_name(in);
        auto nd = read_pod<uint8_t>(in);
        std::vector<int> shape;
        for (int d = 0; d < nd; ++d) shape.push_back(static_cast<int>(read_pod<uint32_t>(in)));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), t.data.size() * sizeof(double));
        ck.tensors.push_back({name, std::move(t)});
    }
    auto ns = read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < ns; ++i) {
        std::string name = read_name(in);
        auto len = read_pod<uint64_t>(in);
        std::string s(len, '\0');
        in.read(s.data(), static_cast<std::streamsize>(len));
        ck.strings.push_back({name, std::move(s)});
    }
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    return ck;
}

void store_params(Checkpoint& ck, const Model& m) {
    ck.put("arch", m.cfg().descriptor());
    for (const auto& [n, v] : m.gen_params().entries) ck.put("gen/" + n, v->value);
    for (const auto& [n, v] : m.disc_params().entries) ck.put("disc/" + n, v->value);
    for (const auto& [n, v] : m.embed_params().entries) ck.put("emb/" + n, v->value);
}

void restore_params(Model& m, const Checkpoint& ck) {
    auto fill = [&](ParamSet& ps, const std::string& prefix) {
        for (auto& [n, v] : ps.entries) {
            const Tensor* t = ck.tensor(prefix + n);
            if (!t) throw std::runtime_error("checkpoint missing parameter " + prefix + n);
            if (t->shape != v->value.shape)
                throw std::runtime_error("checkpoint shape mismatch for " + prefix + n);
            v->value = *t;
        }
    };
    fill(m.gen_params(), "gen/");
    fill(m.disc_params(), "disc/");
    fill(m.embed_params(), "emb/");
}

} // namespace cfc::nets
