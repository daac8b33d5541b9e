#include "cfc/hfreval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cfc/image_io.hpp"
#include "cfc/synthgen.hpp"

namespace cfc::hfreval {

namespace fs = std::filesystem;

SimilarityMatrix similarity_matrix(const std::vector<Tensor>& gallery_feats,
                                   const std::vector<Tensor>& probe_feats,
                                   const std::vector<int>& gallery_ids,
                                   const std::vector<int>& probe_ids) {
    if (gallery_feats.empty() || probe_feats.empty())
        throw std::invalid_argument("similarity_matrix: empty feature set");
    if (gallery_feats.size() != gallery_ids.size() || probe_feats.size() != probe_ids.size())
        throw std::invalid_argument("similarity_matrix: label/feature count mismatch");
    size_t dim = gallery_feats[0].data.size();
    auto norm_of = [&](const std::vector<Tensor>& fs_, const char* side) {
        std::vector<double> out;
        for (size_t i = 0; i < fs_.size(); ++i) {
            if (fs_[i].data.size() != dim)
                throw std::invalid_argument("similarity_matrix: feature dimension mismatch");
            double n = std::sqrt(fs_[i].sq_norm());
            if (n == 0.0)
                throw std::invalid_argument(std::string("similarity_matrix: zero-norm ") + side +
                                            " feature at index " + std::to_string(i));
            out.push_back(n);
        }
        return out;
    };
    std::vector<double> gn = norm_of(gallery_feats, "gallery");
    std::vector<double> pn = norm_of(probe_feats, "probe");
    SimilarityMatrix sim;
    sim.gallery_ids = gallery_ids;
    sim.probe_ids = probe_ids;
    sim.scores = Tensor({static_cast<int>(gallery_feats.size()),
                         static_cast<int>(probe_feats.size())});
    for (size_t g = 0; g < gallery_feats.size(); ++g)
        for (size_t p = 0; p < probe_feats.size(); ++p) {
            double dot = 0;
            for (size_t k = 0; k < dim; ++k) dot += gallery_feats[g].data[k] * probe_feats[p].data[k];
            sim.scores.at2(static_cast<int>(g), static_cast<int>(p)) = dot / (gn[g] * pn[p]);
        }
    return sim;
}

double rank1(const SimilarityMatrix& sim) {
    std::set<int> gallery_set(sim.gallery_ids.begin(), sim.gallery_ids.end());
    for (int id : sim.probe_ids)
        if (!gallery_set.count(id))
            throw std::invalid_argument("rank1: probe id " + std::to_string(id) +
                                        " absent from gallery");
    int hits = 0;
    for (int p = 0; p < sim.n_probe(); ++p) {
        int best = 0;
        for (int g = 1; g < sim.n_gallery(); ++g)
            if (sim.scores.at2(g, p) > sim.scores.at2(best, p)) best = g;
        if (sim.gallery_ids[best] == sim.probe_ids[p]) ++hits;
    }
    return static_cast<double>(hits) / sim.n_probe();
}

namespace {

void split_pairs(const SimilarityMatrix& sim, std::vector<double>& genuine,
                 std::vector<double>& impostor) {
    for (int g = 0; g < sim.n_gallery(); ++g)
        for (int p = 0; p < sim.n_probe(); ++p)
            (sim.gallery_ids[g] == sim.probe_ids[p] ? genuine : impostor)
                .push_back(sim.scores.at2(g, p));
}

double vr_from_pairs(const std::vector<double>& genuine, const std::vector<double>& impostor,
                     double far) {
    auto pass_frac = [](const std::vector<double>& v, double thr) {
        size_t n = 0;
        for (double s : v) n += s >= thr;
        return static_cast<double>(n) / v.size();
    };
    std::vector<double> cand = genuine;
    cand.insert(cand.end(), impostor.begin(), impostor.end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    double thr = std::nextafter(cand.back(), std::numeric_limits<double>::infinity());
    for (double t : cand) // ascending: first hit is the smallest admissible score
        if (pass_frac(impostor, t) <= far) {
            thr = t;
            break;
        }
    return pass_frac(genuine, thr);
}

} // namespace

double verification_rate(const SimilarityMatrix& sim, double far) {
    if (!(far > 0.0 && far < 1.0)) throw std::invalid_argument("verification_rate: far not in (0,1)");
    std::vector<double> genuine, impostor;
    split_pairs(sim, genuine, impostor);
    if (impostor.empty()) throw std::invalid_argument("verification_rate: no impostor pairs");
    if (genuine.empty()) throw std::invalid_argument("verification_rate: no genuine pairs");
    return vr_from_pairs(genuine, impostor, far);
}

std::vector<std::pair<double, double>> roc_curve(const SimilarityMatrix& sim) {
    static const std::vector<double> grid = {0.001, 0.002, 0.005, 0.01, 0.02,
                                             0.05,  0.1,   0.2,   0.5};
    std::vector<double> genuine, impostor;
    split_pairs(sim, genuine, impostor);
    if (impostor.empty() || genuine.empty())
        throw std::invalid_argument("roc_curve: needs both genuine and impostor pairs");
    std::vector<std::pair<double, double>> roc;
    for (double far : grid) roc.push_back({far, vr_from_pairs(genuine, impostor, far)});
    return roc;
}

Tensor fuse_features(const Tensor& f_nir, const Tensor& f_syn) {
    if (f_nir.shape != f_syn.shape)
        throw std::invalid_argument("fuse_features: dimension mismatch");
    Tensor out(f_nir.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = 0.5 * (f_nir.data[i] + f_syn.data[i]);
    return out;
}

FoldReport evaluate_fold(const std::vector<Tensor>& gallery_feats,
                         const std::vector<int>& gallery_ids,
                         const std::vector<Tensor>& probe_feats,
                         const std::vector<int>& probe_ids) {
    SimilarityMatrix sim = similarity_matrix(gallery_feats, probe_feats, gallery_ids, probe_ids);
    FoldReport fr;
    fr.rank1 = rank1(sim);
    for (double far : kFarLevels) fr.vr_at_far[far] = verification_rate(sim, far);
    fr.roc = roc_curve(sim);
    return fr;
}

Mode mode_from_string(const std::string& s) {
    if (s == "raw") return Mode::Raw;
    if (s == "cfc") return Mode::Cfc;
    if (s == "cfc_fuse") return Mode::CfcFuse;
    throw std::invalid_argument("unknown eval mode: " + s);
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Raw: return "raw";
        case Mode::Cfc: return "cfc";
        default: return "cfc_fuse";
    }
}

namespace {

struct ProtocolList {
    std::vector<std::string> paths;
    std::vector<int> ids;
};

ProtocolList read_list(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open protocol file: " + file.string());
    ProtocolList out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("malformed protocol line in " + file.string() + ": " + line);
        out.paths.push_back(line.substr(0, tab));
        out.ids.push_back(std::stoi(line.substr(tab + 1)));
    }
    if (out.paths.empty()) throw std::runtime_error("empty protocol file: " + file.string());
    return out;
}

Tensor load_image_checked(const fs::path& data_dir, const std::string& rel) {
    fs::path p = data_dir / rel;
    if (!fs::exists(p)) throw std::runtime_error("missing image: " + p.string());
    return imageio::load_png(p.string());
}

} // namespace

MetricsReport run_protocol(const nets::Model& model, const std::string& data_dir,
                           const std::string& protocol_dir, Mode mode,
                           const Synthesizer& synth) {
    Synthesizer syn = synth;
    if (!syn)
        syn = [&model](const Tensor& img) {
            return model.generator_forward(img, synthgen::Spectrum::NIR).output->value;
        };

    std::vector<fs::path> folds;
    if (!fs::is_directory(protocol_dir))
        throw std::runtime_error("protocol directory not found: " + protocol_dir);
    for (const auto& e : fs::directory_iterator(protocol_dir))
        if (e.is_directory() && e.path().filename().string().rfind("fold_", 0) == 0)
            folds.push_back(e.path());
    std::sort(folds.begin(), folds.end());
    if (folds.empty()) throw std::runtime_error("no fold_* directories under " + protocol_dir);

    MetricsReport rep;
    for (const auto& fold : folds) {
        ProtocolList gal = read_list(fold / "gallery.txt");
        ProtocolList prb = read_list(fold / "probe.txt");
        std::vector<Tensor> gfeats, pfeats;
        for (const auto& rel : gal.paths)
            gfeats.push_back(model.embed(load_image_checked(data_dir, rel)));
        for (const auto& rel : prb.paths) {
            Tensor img = load_image_checked(data_dir, rel);
            switch (mode) {
                case Mode::Raw: pfeats.push_back(model.embed(img)); break;
                case Mode::Cfc: pfeats.push_back(model.embed(syn(img))); break;
                case Mode::CfcFuse:
                    pfeats.push_back(fuse_features(model.embed(img), model.embed(syn(img))));
                    break;
            }
        }
        rep.per_fold.push_back(evaluate_fold(gfeats, gal.ids, pfeats, prb.ids));
    }

    auto mean_std = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        m /= v.size();
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair<double, double>{m, std::sqrt(s / v.size())};
    };
    std::vector<double> r1;
    for (const auto& f : rep.per_fold) r1.push_back(f.rank1);
    std::tie(rep.rank1, rep.rank1_std) = mean_std(r1);
    for (double far : kFarLevels) {
        std::vector<double> vs;
        for (const auto& f : rep.per_fold) vs.push_back(f.vr_at_far.at(far));
        auto [m, s] = mean_std(vs);
        rep.vr_at_far[far] = m;
        rep.vr_std[far] = s;
    }
    for (size_t i = 0; i < rep.per_fold[0].roc.size(); ++i) {
        double m = 0;
        for (const auto& f : rep.per_fold) m += f.roc[i].second;
        rep.roc.push_back({rep.per_fold[0].roc[i].first, m / rep.per_fold.size()});
    }
    return rep;
}

// ---- CSV round trip -------------------------------------------------------

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "key,value\n";
    out << "rank1," << rank1 << "\n";
    out << "rank1_std," << rank1_std << "\n";
    for (const auto& [far, vr] : vr_at_far) out << "vr@" << far << "," << vr << "\n";
    for (const auto& [far, sd] : vr_std) out << "vr_std@" << far << "," << sd << "\n";
    for (const auto& [far, vr] : roc) out << "roc@" << far << "," << vr << "\n";
    for (size_t f = 0; f < per_fold.size(); ++f) {
        std::string pre = "fold" + std::to_string(f + 1) + "/";
        out << pre << "rank1," << per_fold[f].rank1 << "\n";
        for (const auto& [far, vr] : per_fold[f].vr_at_far)
            out << pre << "vr@" << far << "," << vr << "\n";
        for (const auto& [far, vr] : per_fold[f].roc)
            out << pre << "roc@" << far << "," << vr << "\n";
    }
    return out.str();
}

MetricsReport MetricsReport::from_csv(const std::string& text) {
    MetricsReport rep;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line); // header
    if (line != "key,value") throw std::runtime_error("metrics CSV: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.rfind(',');
        std::string key = line.substr(0, comma);
        double value = std::stod(line.substr(comma + 1));
        FoldReport* fold = nullptr;
        if (key.rfind("fold", 0) == 0) {
            auto slash = key.find('/');
            size_t idx = std::stoul(key.substr(4, slash - 4));
            while (rep.per_fold.size() < idx) rep.per_fold.push_back({});
            fold = &rep.per_fold[idx - 1];
            key = key.substr(slash + 1);
        }
        auto at = key.find('@');
        std::string base = at == std::string::npos ? key : key.substr(0, at);
        double far = at == std::string::npos ? 0 : std::stod(key.substr(at + 1));
        if (fold) {
            if (base == "rank1") fold->rank1 = value;
            else if (base == "vr") fold->vr_at_far[far] = value;
            else if (base == "roc") fold->roc.push_back({far, value});
        } else {
            if (base == "rank1") rep.rank1 = value;
            else if (base == "rank1_std") rep.rank1_std = value;
            else if (base == "vr") rep.vr_at_far[far] = value;
            else if (base == "vr_std") rep.vr_std[far] = value;
            else if (base == "roc") rep.roc.push_back({far, value});
            else throw std::runtime_error("metrics CSV: unknown key " + base);
        }
    }
    return rep;
}

} // namespace cfc::hfreval
