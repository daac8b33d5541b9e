#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "cfc/rng.hpp"
#include "cfc/uvgeom.hpp"

using namespace cfc;
using uvgeom::Pose;
using uvgeom::Surface;
using uvgeom::UVField;
using uvgeom::Vec3;

TEST_CASE("uvgeom: unwrap convention anchor and axis error") {
    // frontal center (azimuth 0 = +z), mid-height
    auto [u, v] = uvgeom::cylindrical_unwrap({0.0, 0.0, 1.0}, -1.0, 1.0);
    CHECK(u == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(uvgeom::cylindrical_unwrap({0.0, 0.3, 0.0}, -1.0, 1.0), std::domain_error);
}

TEST_CASE("uvgeom: sagittal mirror symmetry of u") {
    Rng rng(41);
    for (int k = 0; k < 10; ++k) {
        Vec3 p{rng.uniform(0.1, 1.0), rng.uniform(-0.9, 0.9), rng.uniform(0.1, 1.0)};
        Vec3 q{-p.x, p.y, p.z};
        auto [u1, v1] = uvgeom::cylindrical_unwrap(p, -1.0, 1.0);
        auto [u2, v2] = uvgeom::cylindrical_unwrap(q, -1.0, 1.0);
        CHECK(u1 + u2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
    }
}

TEST_CASE("uvgeom: unwrap matches independent closed-form oracle") {
    Rng rng(42);
    Surface s;
    for (int k = 0; k < 10; ++k) {
        double theta = rng.uniform(-3.0, 3.0);
        double t = rng.uniform(0.05, 0.95);
        Vec3 p = s.point(theta, t);
        double y_min = -s.ry, y_max = s.ry;
        auto [u, v] = uvgeom::cylindrical_unwrap(p, y_min, y_max);
        double u_oracle = 0.5 + std::atan2(p.x, p.z) / (2.0 * std::numbers::pi);
        double v_oracle = (p.y - y_min) / (y_max - y_min);
        CHECK(std::fabs(u - u_oracle) < 1e-12);
        CHECK(std::fabs(v - v_oracle) < 1e-12);
    }
}

TEST_CASE("uvgeom: frontal render symmetric, coords in range, pose limits") {
    Surface s; // symmetric default surface
    UVField f = uvgeom::render_uv_field(s, Pose{0, 0}, 32, 32);
    CHECK(f.valid_count() > 0);
    int left = 0, right = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (f.valid.at2(y, x) > 0.5) (x < 16 ? left : right)++;
    CHECK(std::fabs(left - right) <= 0.02 * f.valid_count());
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (f.valid.at2(y, x) > 0.5) {
                CHECK(f.coords.at3(0, y, x) >= 0.0);
                CHECK(f.coords.at3(0, y, x) <= 1.0);
                CHECK(f.coords.at3(1, y, x) >= 0.0);
                CHECK(f.coords.at3(1, y, x) <= 1.0);
            }
    CHECK_THROWS_AS(uvgeom::render_uv_field(s, Pose{75, 0}, 16, 16), std::invalid_argument);
    CHECK_THROWS_AS(uvgeom::render_uv_field(Surface{0, 0, 0, {}}, Pose{0, 0}, 16, 16),
                    std::invalid_argument);
}

TEST_CASE("uvgeom: yaw culls the far-side cheek u-range") {
    Surface s;
    UVField f = uvgeom::render_uv_field(s, Pose{45, 0}, 48, 48);
    double umin = 1.0, umax = 0.0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x)
            if (f.valid.at2(y, x) > 0.5) {
                umin = std::min(umin, f.coords.at3(0, y, x));
                umax = std::max(umax, f.coords.at3(0, y, x));
            }
    // under +45 degree yaw one cheek rotates away; part of the u-range near
    // that side's extreme must be absent compared with the frontal field
    UVField f0 = uvgeom::render_uv_field(s, Pose{0, 0}, 48, 48);
    double umin0 = 1.0, umax0 = 0.0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x)
            if (f0.valid.at2(y, x) > 0.5) {
                umin0 = std::min(umin0, f0.coords.at3(0, y, x));
                umax0 = std::max(umax0, f0.coords.at3(0, y, x));
            }
    bool culled_low = umin > umin0 + 0.02;
    bool culled_high = umax < umax0 - 0.02;
    CHECK((culled_low || culled_high));
}

TEST_CASE("uvgeom: z-buffer picks the nearest-depth candidate (brute-force oracle)") {
    Surface s;
    s.blobs.push_back({0.0, 0.5, 0.3, 0.25}); // a nose-like bump to create depth variation
    const int N = 16;
    UVField f = uvgeom::render_uv_field(s, Pose{20, 5}, N, N);
    // brute-force: dense surface sampling, track per-pixel max camera-z
    double yaw = 20 * std::numbers::pi / 180, pitch = 5 * std::numbers::pi / 180;
    std::vector<double> best_z(N * N, -1e30);
    std::vector<std::pair<double, double>> best_uv(N * N);
    std::vector<bool> hit(N * N, false);
    const int nth = 1200, nt = 600;
    for (int i = 0; i < nth; ++i)
        for (int j = 1; j < nt; ++j) {
            double theta = -std::numbers::pi + 2 * std::numbers::pi * i / nth;
            double t = static_cast<double>(j) / nt;
            Vec3 p = s.point(theta, t);
            auto [u, v] = uvgeom::cylindrical_unwrap(p, -s.ry, s.ry);
            // yaw about y, then pitch about x (same convention as the renderer)
            double x1 = p.x * std::cos(yaw) + p.z * std::sin(yaw);
            double z1 = -p.x * std::sin(yaw) + p.z * std::cos(yaw);
            double y1 = p.y;
            double y2 = y1 * std::cos(pitch) - z1 * std::sin(pitch);
            double z2 = y1 * std::sin(pitch) + z1 * std::cos(pitch);
            int px = static_cast<int>((x1 + 1.3) / 2.6 * N);
            int py = static_cast<int>((1.3 - y2) / 2.6 * N);
            if (px < 0 || px >= N || py < 0 || py >= N) continue;
            int idx = py * N + px;
            hit[idx] = true;
            if (z2 > best_z[idx]) {
                best_z[idx] = z2;
                best_uv[idx] = {u, v};
            }
        }
    int checked = 0;
    for (int y = 1; y < N - 1; ++y)
        for (int x = 1; x < N - 1; ++x) {
            int idx = y * N + x;
            if (f.valid.at2(y, x) < 0.5 || !hit[idx]) continue;
            // interior pixels only: silhouette pixels may resolve to either
            // surface sheet depending on discretization
            if (f.valid.at2(y - 1, x) < 0.5 || f.valid.at2(y + 1, x) < 0.5 ||
                f.valid.at2(y, x - 1) < 0.5 || f.valid.at2(y, x + 1) < 0.5)
                continue;
            // within one texel of the brute-force winner
            CHECK(std::fabs(f.coords.at3(0, y, x) - best_uv[idx].first) < 1.0 / N);
            CHECK(std::fabs(f.coords.at3(1, y, x) - best_uv[idx].second) < 1.0 / N);
            ++checked;
        }
    CHECK(checked > 20);
}

TEST_CASE("uvgeom: mean field of one or identical fields is unchanged") {
    Surface s;
    UVField f = uvgeom::render_uv_field(s, Pose{10, 0}, 16, 16);
    for (const auto& m : {uvgeom::mean_uv_field({f}), uvgeom::mean_uv_field({f, f})}) {
        for (size_t i = 0; i < f.coords.data.size(); ++i)
            CHECK(m.coords.data[i] == doctest::Approx(f.coords.data[i]).epsilon(1e-12));
        for (size_t i = 0; i < f.valid.data.size(); ++i)
            CHECK(m.valid.data[i] == f.valid.data[i]);
    }
    CHECK_THROWS_AS(uvgeom::mean_uv_field({}), std::invalid_argument);
}

TEST_CASE("uvgeom: mean field averages offsets and is permutation invariant") {
    UVField a, b;
    a.coords = Tensor({2, 2, 2}, 0.4);
    a.valid = Tensor({2, 2}, 1.0);
    b = a;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) b.coords.at3(0, y, x) += 0.1;
    UVField m1 = uvgeom::mean_uv_field({a, b});
    UVField m2 = uvgeom::mean_uv_field({b, a});
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            CHECK(m1.coords.at3(0, y, x) == doctest::Approx(0.45).epsilon(1e-12));
            CHECK(m1.coords.at3(0, y, x) == m2.coords.at3(0, y, x));
        }
}

TEST_CASE("uvgeom: mean field valid mask is a strict majority vote") {
    UVField a, b, c;
    a.coords = Tensor({2, 1, 1}, 0.5);
    a.valid = Tensor({1, 1}, 1.0);
    b = a;
    c = a;
    c.valid.data[0] = 0.0;
    CHECK(uvgeom::mean_uv_field({a, b, c}).valid.data[0] == 1.0); // 2 of 3
    b.valid.data[0] = 0.0;
    CHECK(uvgeom::mean_uv_field({a, b, c}).valid.data[0] == 0.0); // 1 of 3
    CHECK(uvgeom::mean_uv_field({a, b}).valid.data[0] == 0.0);    // 1 of 2: not strict majority
}

TEST_CASE("uvgeom: identity-field warp reproduces the texture") {
    const int N = 8;
    uvgeom::TextureMap tex;
    Rng rng(43);
    tex.data = Tensor({3, N, N});
    for (double& v : tex.data.data) v = rng.uniform();
    UVField f;
    f.coords = Tensor({2, N, N});
    f.valid = Tensor({N, N}, 1.0);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            f.coords.at3(0, y, x) = static_cast<double>(x) / (N - 1);
            f.coords.at3(1, y, x) = static_cast<double>(y) / (N - 1);
        }
    Tensor out = uvgeom::warp(tex, f);
    for (size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(tex.data.data[i]).epsilon(1e-12));
}

TEST_CASE("uvgeom: constant texture warps to the constant on valid pixels") {
    uvgeom::TextureMap tex;
    tex.data = Tensor({3, 4, 4}, 0.63);
    UVField f;
    f.coords = Tensor({2, 5, 5}, 0.37);
    f.valid = Tensor({5, 5}, 0.0);
    f.valid.at2(2, 3) = 1.0;
    Tensor out = uvgeom::warp(tex, f);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x)
                CHECK(out.at3(c, y, x) ==
                      doctest::Approx(f.valid.at2(y, x) > 0.5 ? 0.63 : 0.0).epsilon(1e-12));
}

TEST_CASE("uvgeom: hand bilinear example samples 1.5 midway between texels") {
    uvgeom::TextureMap tex;
    tex.data = Tensor({1, 1, 4});
    tex.data.data = {0, 1, 2, 3};
    UVField f;
    f.coords = Tensor({2, 1, 1});
    f.coords.at3(0, 0, 0) = 0.5; // u*(Wt-1) = 1.5, between texels 1 and 2
    f.coords.at3(1, 0, 0) = 0.0;
    f.valid = Tensor({1, 1}, 1.0);
    CHECK(uvgeom::warp(tex, f).data[0] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("uvgeom: uv field serialization round trip") {
    Surface s;
    UVField f = uvgeom::render_uv_field(s, Pose{15, -5}, 24, 24);
    std::string path = "test_field_roundtrip.uvf";
    uvgeom::save_uv_field(f, path);
    UVField g = uvgeom::load_uv_field(path);
    std::remove(path.c_str());
    REQUIRE(g.coords.shape == f.coords.shape);
    for (size_t i = 0; i < f.coords.data.size(); ++i)
        CHECK(std::fabs(f.coords.data[i] - g.coords.data[i]) < 1e-6); // float32 storage
    for (size_t i = 0; i < f.valid.data.size(); ++i) CHECK(f.valid.data[i] == g.valid.data[i]);
}
