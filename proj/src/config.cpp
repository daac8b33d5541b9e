#include "cfc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cfc {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <typename T>
std::string to_str(const T& v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

} // namespace

std::string fnv1a_hex(const std::string& data) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    std::ostringstream ss;
    ss << std::hex << h;
    return ss.str();
}

// single source of truth for key <-> field mapping
namespace {

struct FieldMap {
    std::map<std::string, std::function<void(RunConfig&, const std::string&)>> setters;
    std::map<std::string, std::function<std::string(const RunConfig&)>> getters;

    template <typename T>
    void reg(const std::string& key, T RunConfig::* field) {
        setters[key] = [field](RunConfig& c, const std::string& v) {
            std::istringstream ss(v);
            T out;
            ss >> out;
            if (ss.fail()) throw std::invalid_argument("bad value for key " + std::string());
            c.*field = out;
        };
        getters[key] = [field](const RunConfig& c) { return to_str(c.*field); };
    }
};

const FieldMap& fields() {
    static FieldMap m = [] {
        FieldMap f;
        f.reg("seed", &RunConfig::seed);
        f.reg("image_size", &RunConfig::image_size);
        f.reg("texture_size", &RunConfig::texture_size);
        f.reg("n_identities", &RunConfig::n_identities);
        f.reg("train_identities", &RunConfig::train_identities);
        f.reg("nir_per_identity", &RunConfig::nir_per_identity);
        f.reg("vis_per_identity", &RunConfig::vis_per_identity);
        f.reg("yaw_range", &RunConfig::yaw_range);
        f.reg("pitch_range", &RunConfig::pitch_range);
        f.reg("max_occluders", &RunConfig::max_occluders);
        f.reg("occluder_radius_frac", &RunConfig::occluder_radius_frac);
        f.reg("texture_separation_floor", &RunConfig::texture_separation_floor);
        f.reg("embed_dim", &RunConfig::embed_dim);
        f.reg("base_width", &RunConfig::base_width);
        f.reg("feature_channels", &RunConfig::feature_channels);
        f.reg("fusion_width", &RunConfig::fusion_width);
        f.reg("disc_width", &RunConfig::disc_width);
        f.reg("dt_hidden", &RunConfig::dt_hidden);
        f.reg("lambda_high", &RunConfig::lambda_high);
        f.reg("alpha_pixel", &RunConfig::alpha_pixel);
        f.reg("prob_clamp_eps", &RunConfig::prob_clamp_eps);
        f.reg("pixel_target", &RunConfig::pixel_target);
        f.reg("mask_loss_weight", &RunConfig::mask_loss_weight);
        f.reg("adv_weight", &RunConfig::adv_weight);
        f.reg("texture_loss_weight", &RunConfig::texture_loss_weight);
        f.reg("perceptual_weight", &RunConfig::perceptual_weight);
        f.reg("recon_weight", &RunConfig::recon_weight);
        f.reg("lr", &RunConfig::lr);
        f.reg("beta1", &RunConfig::beta1);
        f.reg("beta2", &RunConfig::beta2);
        f.reg("adam_eps", &RunConfig::adam_eps);
        f.reg("batch_identities", &RunConfig::batch_identities);
        f.reg("max_steps", &RunConfig::max_steps);
        f.reg("eval_every", &RunConfig::eval_every);
        f.reg("patience", &RunConfig::patience);
        f.reg("min_rel_improve", &RunConfig::min_rel_improve);
        f.reg("uv_warmup_steps", &RunConfig::uv_warmup_steps);
        f.reg("embedder_steps", &RunConfig::embedder_steps);
        f.reg("embedder_lr", &RunConfig::embedder_lr);
        f.reg("embedder_noise", &RunConfig::embedder_noise);
        f.reg("embedder_nir_suppress", &RunConfig::embedder_nir_suppress);
        return f;
    }();
    return m;
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().setters.find(key);
    if (it == fields().setters.end())
        throw std::invalid_argument("unknown config key: " + key);
    try {
        it->second(*this, value);
    } catch (const std::exception&) {
        throw std::invalid_argument("bad value for config key: " + key);
    }
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line missing '=': " + line);
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const auto& [key, get] : fields().getters) out << key << " = " << get(*this) << "\n";
    return out.str();
}

std::string RunConfig::content_hash() const { return fnv1a_hex(to_text()); }

synthgen::GenConfig RunConfig::gen_config() const {
    synthgen::GenConfig g;
    g.n_identities = n_identities;
    g.train_identities = train_identities;
    g.nir_per_identity = nir_per_identity;
    g.vis_per_identity = vis_per_identity;
    g.image_size = image_size;
    g.texture_size = texture_size;
    g.yaw_range = yaw_range;
    g.pitch_range = pitch_range;
    g.texture_separation_floor = texture_separation_floor;
    g.corruption.max_occluders = max_occluders;
    g.corruption.max_radius_frac = occluder_radius_frac;
    return g;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& key) {
        throw std::invalid_argument("invalid config value for key: " + key);
    };
    if (image_size < 16 || (image_size & (image_size - 1)) != 0) fail("image_size");
    if (texture_size < 8 || (texture_size & (texture_size - 1)) != 0) fail("texture_size");
    if (n_identities < 2) fail("n_identities");
    if (train_identities < 1 || train_identities >= n_identities) fail("train_identities");
    if (vis_per_identity < 2) fail("vis_per_identity"); // real D_t pairs need two VIS images
    if (nir_per_identity < 1) fail("nir_per_identity");
    if (feature_channels != 32) fail("feature_channels"); // texture feature form is 32-channel
    if (pixel_target != "literal" && pixel_target != "matched_vis") fail("pixel_target");
    if (lr <= 0 || beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) fail("lr");
    if (batch_identities < 1 || batch_identities > train_identities) fail("batch_identities");
    if (eval_every < 1 || patience < 1 || max_steps < 0) fail("eval_every");
}

} // namespace cfc
