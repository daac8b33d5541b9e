#include "cfc/uvgeom.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "cfc/autodiff.hpp"

namespace cfc::uvgeom {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
} // namespace

int UVField::valid_count() const {
    int n = 0;
    for (double v : valid.data) n += v != 0.0;
    return n;
}

double Surface::radial(double theta, double t) const {
    double r = 1.0;
    for (const auto& b : blobs) {
        double dth = theta - b.theta0;
        // wrap azimuth difference to [-pi, pi]
        while (dth > kPi) dth -= 2 * kPi;
        while (dth < -kPi) dth += 2 * kPi;
        double d2 = (dth * dth) / (2 * b.sigma * b.sigma) +
                    ((t - b.t0) * (t - b.t0)) / (2 * b.sigma * b.sigma);
        r += b.amp * std::exp(-d2);
    }
    return r;
}

Vec3 Surface::point(double theta, double t) const {
    double ring = std::sqrt(std::max(0.0, 1.0 - (2 * t - 1) * (2 * t - 1)));
    double r = radial(theta, t) * ring;
    return {rx * r * std::sin(theta), ry * (2 * t - 1), rz * r * std::cos(theta)};
}

std::vector<double> Surface::pack() const {
    std::vector<double> p{rx, ry, rz};
    for (const auto& b : blobs) {
        p.push_back(b.theta0);
        p.push_back(b.t0);
        p.push_back(b.sigma);
        p.push_back(b.amp);
    }
    return p;
}

Surface Surface::unpack(const std::vector<double>& p) {
    if (p.size() < 3 || (p.size() - 3) % 4 != 0)
        throw std::invalid_argument("Surface::unpack: bad parameter vector");
    Surface s;
    s.rx = p[0];
    s.ry = p[1];
    s.rz = p[2];
    for (size_t i = 3; i + 3 < p.size(); i += 4)
        s.blobs.push_back({p[i], p[i + 1], p[i + 2], p[i + 3]});
    return s;
}

std::pair<double, double> cylindrical_unwrap(const Vec3& p, double y_min, double y_max) {
    if (p.x == 0.0 && p.z == 0.0)
        throw std::domain_error("cylindrical_unwrap: point on cylinder axis");
    double u = 0.5 + std::atan2(p.x, p.z) / (2 * kPi);
    double v = (p.y - y_min) / (y_max - y_min);
    return {u, std::min(1.0, std::max(0.0, v))};
}

UVField render_uv_field(const Surface& s, const Pose& pose, int H, int W,
                        int samples_per_dim) {
    if (s.rx <= 1e-9 || s.ry <= 1e-9 || s.rz <= 1e-9)
        throw std::invalid_argument("render_uv_field: degenerate surface");
    if (std::fabs(pose.yaw_deg) > 60.0 || std::fabs(pose.pitch_deg) > 30.0)
        throw std::invalid_argument("render_uv_field: pose out of range");
    double yaw = pose.yaw_deg * kDegToRad;
    double pitch = pose.pitch_deg * kDegToRad;
    double cy = std::cos(yaw), sy = std::sin(yaw);
    double cp = std::cos(pitch), sp = std::sin(pitch);

    UVField f;
    f.coords = Tensor({2, H, W});
    f.valid = Tensor({H, W});
    Tensor depth({H, W}, -std::numeric_limits<double>::infinity());

    // image window is the fixed square [-1.3, 1.3]^2; identity generation
    // keeps surfaces inside it
    const double half = 1.3;
    int nth = samples_per_dim * std::max(H, W) * 2; // azimuth wraps the full head
    int nt = samples_per_dim * H;
    for (int it = 1; it < nt; ++it) {
        double t = static_cast<double>(it) / nt;
        for (int ith = 0; ith < nth; ++ith) {
            double theta = -kPi + 2 * kPi * (ith + 0.5) / nth;
            Vec3 p = s.point(theta, t);
            // yaw about the vertical axis, then pitch about the x axis
            double x1 = cy * p.x + sy * p.z;
            double z1 = -sy * p.x + cy * p.z;
            double y1 = p.y;
            double y2 = cp * y1 - sp * z1;
            double z2 = sp * y1 + cp * z1;
            int px = static_cast<int>((x1 / half * 0.5 + 0.5) * W);
            int py = static_cast<int>((-y2 / half * 0.5 + 0.5) * H);
            if (px < 0 || px >= W || py < 0 || py >= H) continue;
            if (z2 <= depth.at2(py, px)) continue; // camera looks along -z
            depth.at2(py, px) = z2;
            auto [u, v] = cylindrical_unwrap(p, -s.ry, s.ry);
            f.coords.at3(0, py, px) = u;
            f.coords.at3(1, py, px) = v;
            f.valid.at2(py, px) = 1.0;
        }
    }
    return f;
}

UVField mean_uv_field(const std::vector<UVField>& fields) {
    if (fields.empty()) throw std::invalid_argument("mean_uv_field: empty list");
    int H = fields[0].height(), W = fields[0].width();
    for (const auto& f : fields)
        if (f.height() != H || f.width() != W)
            throw std::invalid_argument("mean_uv_field: size mismatch");
    size_t n = fields.size();
    UVField out;
    out.coords = Tensor({2, H, W});
    out.valid = Tensor({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            size_t cnt = 0;
            double su = 0, sv = 0;
            for (const auto& f : fields)
                if (f.valid.at2(y, x) != 0.0) {
                    ++cnt;
                    su += f.coords.at3(0, y, x);
                    sv += f.coords.at3(1, y, x);
                }
            if (cnt > 0) {
                out.coords.at3(0, y, x) = su / cnt;
                out.coords.at3(1, y, x) = sv / cnt;
            }
            if (2 * cnt > n) out.valid.at2(y, x) = 1.0;
        }
    return out;
}

Tensor warp(const TextureMap& tex, const UVField& field) {
    auto t = ad::constant(tex.data);
    auto c = ad::constant(field.coords);
    return ad::grid_sample(t, c, field.valid)->value;
}

void save_uv_field(const UVField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_uv_field: cannot open " + path);
    char magic[8] = {'C', 'F', 'C', 'U', 'V', '1', 0, 0};
    uint32_t H = f.height(), W = f.width();
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&H), 4);
    out.write(reinterpret_cast<const char*>(&W), 4);
    std::vector<float> buf(f.coords.data.begin(), f.coords.data.end());
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
    std::vector<uint8_t> mask(f.valid.data.size());
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = f.valid.data[i] != 0.0 ? 1 : 0;
    out.write(reinterpret_cast<const char*>(mask.data()), mask.size());
    if (!out) throw std::runtime_error("save_uv_field: write failed: " + path);
}

UVField load_uv_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_uv_field: cannot open " + path);
    char magic[8];
    uint32_t H = 0, W = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&H), 4);
    in.read(reinterpret_cast<char*>(&W), 4);
    if (!in || std::memcmp(magic, "CFCUV1\0\0", 8) != 0)
        throw std::runtime_error("load_uv_field: bad header: " + path);
    UVField f;
    f.coords = Tensor({2, static_cast<int>(H), static_cast<int>(W)});
    f.valid = Tensor({static_cast<int>(H), static_cast<int>(W)});
    std::vector<float> buf(f.coords.data.size());
    in.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
    std::vector<uint8_t> mask(f.valid.data.size());
    in.read(reinterpret_cast<char*>(mask.data()), mask.size());
    if (!in) throw std::runtime_error("load_uv_field: truncated file: " + path);
    for (size_t i = 0; i < buf.size(); ++i) f.coords.data[i] = buf[i];
    for (size_t i = 0; i < mask.size(); ++i) f.valid.data[i] = mask[i] ? 1.0 : 0.0;
    return f;
}

} // namespace cfc::uvgeom
