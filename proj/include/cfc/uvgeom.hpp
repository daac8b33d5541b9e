#pragma once

#include <string>
#include <vector>

#include "cfc/tensor.hpp"

namespace cfc::uvgeom {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

struct Pose {
    double yaw_deg = 0;
    double pitch_deg = 0;
};

// Dense backward-warping field: per image pixel, (u,v) texture coordinates in
// [0,1]^2 plus a validity mask marking facial pixels.
struct UVField {
    Tensor coords; // [2,H,W], channel 0 = u, channel 1 = v
    Tensor valid;  // [H,W], values 0/1

    int height() const { return coords.shape[1]; }
    int width() const { return coords.shape[2]; }
    int valid_count() const;
};

// Pose-invariant facial texture; C = 3 (color) or 32 (feature form).
struct TextureMap {
    Tensor data; // [C,Ht,Wt]
};

// Parametric face proxy: an ellipsoid-like surface of revolution with radial
// Gaussian feature blobs. Parameterized by azimuth theta in [-pi,pi] (0 =
// frontal, +z) and height fraction t in (0,1).
struct SurfaceBlob {
    double theta0 = 0, t0 = 0.5, sigma = 0.2, amp = 0.0;
};

struct Surface {
    double rx = 0.8, ry = 1.0, rz = 0.8;
    std::vector<SurfaceBlob> blobs;

    Vec3 point(double theta, double t) const;
    double radial(double theta, double t) const;

    // packs to / from the flat shape_params vector
    std::vector<double> pack() const;
    static Surface unpack(const std::vector<double>& p);
};

// u = 0.5 + atan2(x, z) / (2*pi); v = (y - y_min) / (y_max - y_min).
// Throws std::domain_error for points on the vertical axis (x = z = 0).
std::pair<double, double> cylindrical_unwrap(const Vec3& p, double y_min, double y_max);

// Orthographic render of the surface's UV correspondences at the given pose.
// Per pixel, the nearest-to-camera surface sample wins (z-buffer); uncovered
// pixels are invalid. Throws std::invalid_argument for degenerate surfaces or
// poses outside |yaw| <= 60, |pitch| <= 30.
UVField render_uv_field(const Surface& s, const Pose& pose, int H, int W,
                        int samples_per_dim = 4);

// Per-pixel mean of coords over fields where valid; valid by strict majority
// vote. Throws std::invalid_argument on an empty list or size mismatch.
UVField mean_uv_field(const std::vector<UVField>& fields);

// Bilinear backward warp of `tex` through `field`. Invalid pixels output 0.
// Same code path as the differentiable ad::grid_sample op.
Tensor warp(const TextureMap& tex, const UVField& field);

// little-endian binary raster: 16-byte header (magic "CFCUV1\0\0", u32 H,
// u32 W), then H*W*2 float32 (u plane, v plane), then H*W uint8 mask.
void save_uv_field(const UVField& f, const std::string& path);
UVField load_uv_field(const std::string& path);

} // namespace cfc::uvgeom
