#pragma once

#include "cfc/tensor.hpp"

namespace cfc::wavelet {

// One-level orthonormal Haar split of a [C,H,W] tensor: per 2x2 block
// [[a,b],[c,d]],
//   ll = (a+b+c+d)/2   lh = (a-b+c-d)/2
//   hl = (a+b-c-d)/2   hh = (a-b-c+d)/2
// The /2 normalization makes the transform orthonormal, so energy is
// preserved band-wise.
struct WaveletPyramid {
    Tensor ll, lh, hl, hh; // each [C,H/2,W/2]
};

// H and W must be even; throws std::invalid_argument otherwise (caller pads).
WaveletPyramid haar_decompose(const Tensor& x);

// Exact inverse of haar_decompose.
Tensor haar_reconstruct(const WaveletPyramid& p);

// low = ll ([C,h,w]); high = channel concatenation (lh, hl, hh) -> [3C,h,w].
struct Bands {
    Tensor low;
    Tensor high;
};
Bands split_bands(const WaveletPyramid& p);

} // namespace cfc::wavelet
