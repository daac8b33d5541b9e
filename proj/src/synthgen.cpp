#include "cfc/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cfc/image_io.hpp"

namespace fs = std::filesystem;

namespace cfc::synthgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

// affine channel mix; rows are positive and sum to 0.9, so with the +0.05
// offset the output stays inside [0.05, 0.95] and the map is invertible
constexpr double kMix[3][3] = {{0.30, 0.55, 0.05}, {0.25, 0.35, 0.30}, {0.10, 0.25, 0.55}};
constexpr double kMixInv[3][3] = {
    // inverse of kMix; round-trip is asserted in tests
    {-5.222222222222223, 12.888888888888888, -6.555555555555554},
    {4.777777777777778, -7.11111111111111, 3.444444444444443},
    {-1.2222222222222217, 0.8888888888888881, 1.4444444444444446}};
constexpr double kOffset = 0.05;
constexpr double kGamma = 0.85;

Tensor make_texture(Rng& rng, int ts) {
    // Low-dimensional identity appearance family (7 scalars): base tone per
    // channel, one vertical-gradient strength, and one intensity per fixed
    // landmark blob along a fixed color direction. A compact family keeps the
    // texture manifold learnable from few training identities.
    Tensor tex({3, ts, ts});
    double base[3];
    for (int c = 0; c < 3; ++c) base[c] = rng.uniform(0.30, 0.90);
    double grad = rng.uniform(-0.15, 0.15);
    struct Blob {
        double u, v;
    };
    const Blob centers[3] = {{0.35, 0.40}, {0.65, 0.40}, {0.50, 0.72}};
    const double dirs[3][3] = {{1.0, -0.2, -0.4}, {-0.3, 1.0, -0.2}, {-0.4, -0.3, 1.0}};
    constexpr double kBlobSigma = 0.09;
    double bint[3];
    for (int k = 0; k < 3; ++k) bint[k] = rng.uniform(-0.45, 0.45);
    for (int y = 0; y < ts; ++y)
        for (int x = 0; x < ts; ++x) {
            double u = x / double(ts - 1), v = y / double(ts - 1);
            for (int c = 0; c < 3; ++c) {
                double val = base[c] + grad * (v - 0.5);
                for (int k = 0; k < 3; ++k) {
                    double du = u - centers[k].u, dv = v - centers[k].v;
                    val += bint[k] * dirs[k][c] *
                           std::exp(-(du * du + dv * dv) / (2 * kBlobSigma * kBlobSigma));
                }
                tex.at3(c, y, x) = std::min(0.95, std::max(0.05, val));
            }
        }
    return tex;
}

double texture_mad(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
    return s / a.data.size();
}

std::vector<double> make_shape(Rng& rng) {
    uvgeom::Surface s;
    s.rx = rng.uniform(0.72, 0.95);
    s.ry = rng.uniform(0.88, 1.08);
    s.rz = rng.uniform(0.68, 0.88);
    // nose ridge plus symmetric cheek blobs
    double nose = rng.uniform(0.06, 0.14);
    double cheek = rng.uniform(0.02, 0.08);
    double csig = rng.uniform(0.25, 0.40);
    s.blobs.push_back({0.0, rng.uniform(0.40, 0.50), rng.uniform(0.15, 0.25), nose});
    s.blobs.push_back({0.55, 0.45, csig, cheek});
    s.blobs.push_back({-0.55, 0.45, csig, cheek});
    return s.pack();
}

// textures for ids 0..id under the pairwise separation floor; deterministic
std::vector<Tensor> textures_up_to(uint64_t seed, int id, int ts, double floor_) {
    std::vector<Tensor> out;
    out.reserve(id + 1);
    for (int k = 0; k <= id; ++k) {
        for (uint64_t attempt = 0;; ++attempt) {
            Rng rng = Rng::child(seed, static_cast<uint64_t>(k) * 997 + attempt * 7919);
            Tensor tex = make_texture(rng, ts);
            bool ok = true;
            for (const auto& prev : out)
                if (texture_mad(tex, prev) < floor_) {
                    ok = false;
                    break;
                }
            if (ok) {
                out.push_back(std::move(tex));
                break;
            }
            if (attempt > 1000)
                throw std::runtime_error("generate_identity: cannot satisfy separation floor");
        }
    }
    return out;
}

double background_value(int c, int y, int x, int H, int W) {
    double fy = y / double(H - 1), fx = x / double(W - 1);
    double base[3] = {0.32, 0.36, 0.42};
    return base[c] + 0.10 * fx - 0.08 * fy;
}

} // namespace

const char* to_string(Spectrum s) { return s == Spectrum::NIR ? "nir" : "vis"; }

Spectrum spectrum_from_string(const std::string& s) {
    if (s == "nir") return Spectrum::NIR;
    if (s == "vis") return Spectrum::VIS;
    throw std::invalid_argument("unknown spectrum: " + s);
}

IdentityParams generate_identity(uint64_t seed, int id, int texture_size,
                                 double separation_floor) {
    if (id < 0) throw std::invalid_argument("generate_identity: id must be >= 0");
    IdentityParams p;
    p.id = id;
    p.canonical_texture.data =
        textures_up_to(seed, id, texture_size, separation_floor).back();
    Rng rng = Rng::child(seed ^ 0x5851F42D4C957F2Dull, static_cast<uint64_t>(id));
    p.shape_params = make_shape(rng);
    return p;
}

void spectral_transform(Tensor& img) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw std::invalid_argument("spectral_transform: need [3,H,W]");
    int hw = img.shape[1] * img.shape[2];
    for (int i = 0; i < hw; ++i) {
        double r = img.data[i], g = img.data[hw + i], b = img.data[2 * hw + i];
        double v[3];
        for (int c = 0; c < 3; ++c) {
            double m = kMix[c][0] * r + kMix[c][1] * g + kMix[c][2] * b + kOffset;
            v[c] = std::pow(m, kGamma);
        }
        img.data[i] = v[0];
        img.data[hw + i] = v[1];
        img.data[2 * hw + i] = v[2];
    }
}

void spectral_inverse(Tensor& img) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw std::invalid_argument("spectral_inverse: need [3,H,W]");
    int hw = img.shape[1] * img.shape[2];
    for (int i = 0; i < hw; ++i) {
        double m[3];
        for (int c = 0; c < 3; ++c) {
            double y = img.data[c * hw + i];
            m[c] = std::pow(std::max(0.0, y), 1.0 / kGamma) - kOffset;
        }
        for (int c = 0; c < 3; ++c)
            img.data[c * hw + i] =
                kMixInv[c][0] * m[0] + kMixInv[c][1] * m[1] + kMixInv[c][2] * m[2];
    }
}

FaceSample render_sample(const IdentityParams& identity, const uvgeom::Pose& pose,
                         Spectrum spectrum, const CorruptionSpec& corruption,
                         int image_size) {
    if (std::fabs(pose.yaw_deg) > 60.0 || std::fabs(pose.pitch_deg) > 30.0)
        throw std::invalid_argument("render_sample: pose out of range");
    int H = image_size, W = image_size;
    uvgeom::Surface surf = uvgeom::Surface::unpack(identity.shape_params);
    FaceSample s;
    s.identity = identity.id;
    s.spectrum = spectrum;
    s.pose = pose;
    s.gt_uv = uvgeom::render_uv_field(surf, pose, H, W);
    Tensor facial = uvgeom::warp(identity.canonical_texture, s.gt_uv);
    if (spectrum == Spectrum::NIR) spectral_transform(facial);
    s.image = Tensor({3, H, W});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                s.image.at3(c, y, x) = s.gt_uv.valid.at2(y, x) != 0.0
                                           ? facial.at3(c, y, x)
                                           : background_value(c, y, x, H, W);
    if (spectrum == Spectrum::NIR) {
        Tensor mask({H, W});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (s.gt_uv.valid.at2(y, x) == 0.0) mask.at2(y, x) = 1.0;
        Rng rng = Rng::child(corruption.rng_key, 0xC0FFEE);
        int n_occ = static_cast<int>(rng.below(corruption.max_occluders + 1));
        for (int k = 0; k < n_occ; ++k) {
            double cx = rng.uniform(0.2, 0.8) * W;
            double cy = rng.uniform(0.2, 0.8) * H;
            double rx = rng.uniform(0.04, corruption.max_radius_frac) * W;
            double ry = rng.uniform(0.04, corruption.max_radius_frac) * H;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double dx = (x - cx) / rx, dy = (y - cy) / ry;
                    if (dx * dx + dy * dy <= 1.0) mask.at2(y, x) = 1.0;
                }
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (mask.at2(y, x) != 0.0)
                    for (int c = 0; c < 3; ++c) s.image.at3(c, y, x) = 0.0;
        s.corruption_mask = std::move(mask);
    }
    return s;
}

DatasetSplit make_dataset(const GenConfig& cfg, uint64_t seed) {
    if (cfg.n_identities < 2)
        throw std::invalid_argument("make_dataset: need at least 2 identities");
    if (cfg.train_identities < 1 || cfg.train_identities >= cfg.n_identities)
        throw std::invalid_argument("make_dataset: bad train/test split");
    DatasetSplit split;
    for (int id = 0; id < cfg.n_identities; ++id) {
        IdentityParams ident = generate_identity(seed, id, cfg.texture_size,
                                                 cfg.texture_separation_floor);
        bool is_train = id < cfg.train_identities;
        Rng pose_rng = Rng::child(seed ^ 0x94D049BB133111EBull, static_cast<uint64_t>(id));
        // VIS: mostly frontal (first exactly frontal; the rest jitter a little)
        std::vector<FaceSample> vis;
        for (int k = 0; k < cfg.vis_per_identity; ++k) {
            uvgeom::Pose pose;
            if (k > 0) {
                pose.yaw_deg = pose_rng.uniform(-5.0, 5.0);
                pose.pitch_deg = pose_rng.uniform(-3.0, 3.0);
            }
            CorruptionSpec unused;
            vis.push_back(render_sample(ident, pose, Spectrum::VIS, unused, cfg.image_size));
        }
        std::vector<FaceSample> nir;
        for (int k = 0; k < cfg.nir_per_identity; ++k) {
            uvgeom::Pose pose;
            pose.yaw_deg = pose_rng.uniform(-cfg.yaw_range, cfg.yaw_range);
            pose.pitch_deg = pose_rng.uniform(-cfg.pitch_range, cfg.pitch_range);
            CorruptionSpec cs = cfg.corruption;
            cs.rng_key = seed * 1000003ull + static_cast<uint64_t>(id) * 131ull + k;
            nir.push_back(render_sample(ident, pose, Spectrum::NIR, cs, cfg.image_size));
        }
        if (is_train) {
            split.textures[id] = ident.canonical_texture.data;
            for (auto& v : vis) split.train.push_back(std::move(v));
            for (auto& n : nir) split.train.push_back(std::move(n));
        } else {
            split.test_gallery.push_back(std::move(vis[0])); // the frontal one
            for (auto& n : nir) split.test_probe.push_back(std::move(n));
        }
    }
    return split;
}

namespace {

struct ManifestRow {
    std::string path;
    int id;
    Spectrum spectrum;
    double yaw, pitch;
};

void write_list(const std::string& path, const std::vector<std::pair<std::string, int>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (const auto& [p, id] : rows) out << p << "\t" << id << "\n";
}

void write_sample_group(const DatasetSplit& split, const std::string& dir,
                        std::ofstream& manifest,
                        std::map<std::pair<int, Spectrum>, int>& counters,
                        const std::vector<FaceSample>& samples,
                        std::vector<std::pair<std::string, int>>& list_out) {
    for (const auto& s : samples) {
        int k = counters[{s.identity, s.spectrum}]++;
        std::string rel = "images/" + std::to_string(s.identity) + "/" +
                          std::string(to_string(s.spectrum)) + "_" + std::to_string(k) + ".png";
        std::string uvrel = "uv/" + std::to_string(s.identity) + "/" +
                            std::string(to_string(s.spectrum)) + "_" + std::to_string(k) +
                            ".uvf";
        fs::create_directories(fs::path(dir) / "images" / std::to_string(s.identity));
        fs::create_directories(fs::path(dir) / "uv" / std::to_string(s.identity));
        imageio::save_png(s.image, dir + "/" + rel);
        uvgeom::save_uv_field(s.gt_uv, dir + "/" + uvrel);
        manifest << rel << "\t" << s.identity << "\t" << to_string(s.spectrum) << "\t"
                 << s.pose.yaw_deg << "\t" << s.pose.pitch_deg << "\n";
        list_out.push_back({rel, s.identity});
    }
}

} // namespace

void write_dataset(const DatasetSplit& split, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.tsv");
    if (!manifest) throw std::runtime_error("cannot open " + dir + "/manifest.tsv");
    manifest << "path\tid\tspectrum\tyaw\tpitch\n";
    manifest.precision(17);
    std::map<std::pair<int, Spectrum>, int> counters;
    std::vector<std::pair<std::string, int>> train_list, gallery_list, probe_list;
    write_sample_group(split, dir, manifest, counters, split.train, train_list);
    write_sample_group(split, dir, manifest, counters, split.test_gallery, gallery_list);
    write_sample_group(split, dir, manifest, counters, split.test_probe, probe_list);
    write_list(dir + "/train.txt", train_list);
    for (const auto& [id, tex] : split.textures) {
        fs::create_directories(fs::path(dir) / "textures");
        imageio::save_png(tex, dir + "/textures/" + std::to_string(id) + ".png");
    }
    fs::create_directories(fs::path(dir) / "protocol" / "fold_1");
    write_list(dir + "/protocol/fold_1/gallery.txt", gallery_list);
    write_list(dir + "/protocol/fold_1/probe.txt", probe_list);
}

DatasetSplit load_dataset(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.tsv");
    if (!manifest) throw std::runtime_error("load_dataset: missing " + dir + "/manifest.tsv");
    auto read_set = [&](const std::string& p) {
        std::ifstream in(dir + "/" + p);
        if (!in) throw std::runtime_error("load_dataset: missing " + dir + "/" + p);
        std::map<std::string, int> rows;
        std::string path;
        int id;
        while (in >> path >> id) rows[path] = id;
        return rows;
    };
    auto train_list = read_set("train.txt");
    auto gallery_list = read_set("protocol/fold_1/gallery.txt");
    auto probe_list = read_set("protocol/fold_1/probe.txt");

    DatasetSplit split;
    std::string line;
    std::getline(manifest, line); // header
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestRow row;
        std::string spec;
        ss >> row.path >> row.id >> spec >> row.yaw >> row.pitch;
        if (!ss) throw std::runtime_error("load_dataset: bad manifest line: " + line);
        row.spectrum = spectrum_from_string(spec);
        FaceSample s;
        s.image = imageio::load_png(dir + "/" + row.path);
        std::string uvp = row.path;
        uvp.replace(0, 6, "uv"); // images/... -> uv/...
        uvp.replace(uvp.size() - 3, 3, "uvf");
        s.gt_uv = uvgeom::load_uv_field(dir + "/" + uvp);
        s.identity = row.id;
        s.spectrum = row.spectrum;
        s.pose = {row.yaw, row.pitch};
        if (s.spectrum == Spectrum::NIR) {
            // corruption mask is not persisted; recover it as the zeroed pixels
            int H = s.image.shape[1], W = s.image.shape[2];
            Tensor mask({H, W});
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    bool zero = true;
                    for (int c = 0; c < 3; ++c) zero = zero && s.image.at3(c, y, x) == 0.0;
                    if (zero) mask.at2(y, x) = 1.0;
                }
            s.corruption_mask = std::move(mask);
        }
        if (train_list.count(row.path))
            split.train.push_back(std::move(s));
        else if (gallery_list.count(row.path))
            split.test_gallery.push_back(std::move(s));
        else if (probe_list.count(row.path))
            split.test_probe.push_back(std::move(s));
        else
            throw std::runtime_error("load_dataset: " + row.path + " not in any split list");
    }
    if (fs::exists(fs::path(dir) / "textures"))
        for (const auto& e : fs::directory_iterator(fs::path(dir) / "textures")) {
            int id = std::stoi(e.path().stem().string());
            split.textures[id] = imageio::load_png(e.path().string());
        }
    return split;
}

} // namespace cfc::synthgen
