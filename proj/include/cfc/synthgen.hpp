#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfc/rng.hpp"
#include "cfc/tensor.hpp"
#include "cfc/uvgeom.hpp"

namespace cfc::synthgen {

enum class Spectrum { NIR, VIS };

const char* to_string(Spectrum s);
Spectrum spectrum_from_string(const std::string& s);

struct IdentityParams {
    int id = -1;
    uvgeom::TextureMap canonical_texture; // [3,Ht,Wt], values in [0,1]
    std::vector<double> shape_params;     // packed uvgeom::Surface
};

struct FaceSample {
    Tensor image; // [3,H,W] in [0,1]
    int identity = -1;
    Spectrum spectrum = Spectrum::VIS;
    uvgeom::Pose pose;
    uvgeom::UVField gt_uv;
    std::optional<Tensor> corruption_mask; // [H,W] 0/1, present iff NIR
};

struct DatasetSplit {
    std::vector<FaceSample> train;
    std::vector<FaceSample> test_gallery; // VIS, one frontal per identity
    std::vector<FaceSample> test_probe;   // NIR, varied pose
    std::map<int, Tensor> textures;       // canonical texture per train identity
};

struct CorruptionSpec {
    int max_occluders = 2;
    double max_radius_frac = 0.15; // of image size
    uint64_t rng_key = 0;
};

struct GenConfig {
    int n_identities = 20;
    int train_identities = 10;
    int nir_per_identity = 12;
    int vis_per_identity = 4;
    int image_size = 64;
    int texture_size = 32;
    double yaw_range = 40.0;   // NIR probe yaw in [-yaw_range, yaw_range]
    double pitch_range = 10.0;
    double texture_separation_floor = 0.05;
    CorruptionSpec corruption;
};

// Deterministic per-identity parameters. Textures of distinct ids under the
// same seed are separated by at least `separation_floor` mean absolute
// difference (resampled internally until the floor holds).
IdentityParams generate_identity(uint64_t seed, int id, int texture_size = 32,
                                 double separation_floor = 0.05);

// Fixed invertible NIR spectral map: per-pixel affine channel mix followed by
// gamma. `spectral_inverse` undoes it exactly on [0,1] inputs.
void spectral_transform(Tensor& img);
void spectral_inverse(Tensor& img);

// Renders one sample. VIS facial region is exactly
// warp(canonical_texture, render_uv_field(shape, pose)) over a fixed
// background; NIR additionally applies the spectral transform on the facial
// region and zeroes background plus random elliptical occluders.
// Throws std::invalid_argument for poses outside |yaw|<=60, |pitch|<=30.
FaceSample render_sample(const IdentityParams& identity, const uvgeom::Pose& pose,
                         Spectrum spectrum, const CorruptionSpec& corruption,
                         int image_size);

// Disjoint-identity train/test split; gallery holds exactly one frontal VIS
// sample per test identity. Throws std::invalid_argument if n_identities < 2.
DatasetSplit make_dataset(const GenConfig& cfg, uint64_t seed);

// Directory layout: images/<id>/<spectrum>_<k>.png, uv/<id>/<spectrum>_<k>.uvf,
// textures/<id>.png (train identities only),
// manifest.tsv (path, id, spectrum, yaw, pitch), train.txt, and
// protocol/fold_1/{gallery.txt,probe.txt} with (path, id) lines.
void write_dataset(const DatasetSplit& split, const std::string& dir);
DatasetSplit load_dataset(const std::string& dir);

} // namespace cfc::synthgen
