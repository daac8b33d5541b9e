#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfc/nets.hpp"
#include "cfc/tensor.hpp"

namespace cfc::hfreval {

// G gallery rows by P probe columns of cosine similarities.
struct SimilarityMatrix {
    Tensor scores; // [G,P]
    std::vector<int> gallery_ids, probe_ids;

    int n_gallery() const { return scores.shape[0]; }
    int n_probe() const { return scores.shape[1]; }
};

SimilarityMatrix similarity_matrix(const std::vector<Tensor>& gallery_feats,
                                   const std::vector<Tensor>& probe_feats,
                                   const std::vector<int>& gallery_ids,
                                   const std::vector<int>& probe_ids);

// Fraction of probes whose best-scoring gallery entry carries the same id.
// Ties break toward the lowest gallery index. Every probe id must appear in
// the gallery.
double rank1(const SimilarityMatrix& sim);

// Verification rate at a false-accept rate. The threshold is the smallest
// score present in the matrix whose impostor-pass fraction is <= far (ties at
// the threshold pass); if even the largest score lets too many impostors
// through, the threshold is nudged just above it.
double verification_rate(const SimilarityMatrix& sim, double far);

// (FAR, VR) curve over a fixed FAR grid; FAR strictly increasing, VR
// non-decreasing by construction of the threshold rule.
std::vector<std::pair<double, double>> roc_curve(const SimilarityMatrix& sim);

// element-wise mean of two features of equal dimension
Tensor fuse_features(const Tensor& f_nir, const Tensor& f_syn);

struct FoldReport {
    double rank1 = 0;
    std::map<double, double> vr_at_far;
    std::vector<std::pair<double, double>> roc;
};

struct MetricsReport {
    double rank1 = 0, rank1_std = 0;
    std::map<double, double> vr_at_far, vr_std;
    std::vector<std::pair<double, double>> roc; // mean over folds
    std::vector<FoldReport> per_fold;

    std::string to_csv() const;
    static MetricsReport from_csv(const std::string& text);
};

enum class Mode { Raw, Cfc, CfcFuse };
Mode mode_from_string(const std::string& s); // raw | cfc | cfc_fuse
std::string to_string(Mode m);

// Maps a NIR probe image to a synthesized VIS image. When empty,
// run_protocol uses the model's own generator.
using Synthesizer = std::function<Tensor(const Tensor&)>;

// Evaluates every fold under protocol_dir (fold_*/gallery.txt + probe.txt of
// tab-separated path/id lines; paths relative to data_dir). The gallery is
// always embedded as-is; probes follow the mode. Reports per fold plus
// mean +- std (population std; a single fold reports std = 0).
MetricsReport run_protocol(const nets::Model& model, const std::string& data_dir,
                           const std::string& protocol_dir, Mode mode,
                           const Synthesizer& synth = {});

FoldReport evaluate_fold(const std::vector<Tensor>& gallery_feats,
                         const std::vector<int>& gallery_ids,
                         const std::vector<Tensor>& probe_feats,
                         const std::vector<int>& probe_ids);

// FAR levels reported in vr_at_far
inline const std::vector<double> kFarLevels = {0.01, 0.001};

} // namespace cfc::hfreval
