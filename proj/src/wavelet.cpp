#include "cfc/wavelet.hpp"

#include <stdexcept>

namespace cfc::wavelet {

WaveletPyramid haar_decompose(const Tensor& x) {
    if (x.shape.size() != 3) throw std::invalid_argument("haar_decompose: need [C,H,W]");
    int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("haar_decompose: odd dimension");
    WaveletPyramid p;
    std::vector<int> hs{C, H / 2, W / 2};
    p.ll = Tensor(hs);
    p.lh = Tensor(hs);
    p.hl = Tensor(hs);
    p.hh = Tensor(hs);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int xx = 0; xx < W / 2; ++xx) {
                double a = x.at3(c, 2 * y, 2 * xx);
                double b = x.at3(c, 2 * y, 2 * xx + 1);
                double cc = x.at3(c, 2 * y + 1, 2 * xx);
                double d = x.at3(c, 2 * y + 1, 2 * xx + 1);
                p.ll.at3(c, y, xx) = 0.5 * (a + b + cc + d);
                p.lh.at3(c, y, xx) = 0.5 * (a - b + cc - d);
                p.hl.at3(c, y, xx) = 0.5 * (a + b - cc - d);
                p.hh.at3(c, y, xx) = 0.5 * (a - b - cc + d);
            }
    return p;
}

Tensor haar_reconstruct(const WaveletPyramid& p) {
    const auto& s = p.ll.shape;
    if (s.size() != 3 || !p.lh.same_shape(p.ll) || !p.hl.same_shape(p.ll) ||
        !p.hh.same_shape(p.ll))
        throw std::invalid_argument("haar_reconstruct: band shape mismatch");
    int C = s[0], h = s[1], w = s[2];
    Tensor x({C, 2 * h, 2 * w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double ll = p.ll.at3(c, y, xx), lh = p.lh.at3(c, y, xx);
                double hl = p.hl.at3(c, y, xx), hh = p.hh.at3(c, y, xx);
                x.at3(c, 2 * y, 2 * xx) = 0.5 * (ll + lh + hl + hh);
                x.at3(c, 2 * y, 2 * xx + 1) = 0.5 * (ll - lh + hl - hh);
                x.at3(c, 2 * y + 1, 2 * xx) = 0.5 * (ll + lh - hl - hh);
                x.at3(c, 2 * y + 1, 2 * xx + 1) = 0.5 * (ll - lh - hl + hh);
            }
    return x;
}

Bands split_bands(const WaveletPyramid& p) {
    const auto& s = p.ll.shape;
    if (s.size() != 3) throw std::invalid_argument("split_bands: bad pyramid");
    int C = s[0], h = s[1], w = s[2];
    Bands b;
    b.low = p.ll;
    b.high = Tensor({3 * C, h, w});
    size_t n = p.lh.data.size();
    std::copy(p.lh.data.begin(), p.lh.data.end(), b.high.data.begin());
    std::copy(p.hl.data.begin(), p.hl.data.end(), b.high.data.begin() + n);
    std::copy(p.hh.data.begin(), p.hh.data.end(), b.high.data.begin() + 2 * n);
    return b;
}

} // namespace cfc::wavelet
