#pragma once

#include <string>
#include <vector>

#include "cfc/tensor.hpp"

namespace cfc::imageio {

// 8-bit RGB PNG round trip for [3,H,W] tensors in [0,1].
void save_png(const Tensor& img, const std::string& path);
Tensor load_png(const std::string& path);

// Horizontal concatenation of same-height images into one mosaic row grid:
// `images` laid out row-major into a grid `cols` wide, 2px black separators.
Tensor make_mosaic(const std::vector<Tensor>& images, int cols);

} // namespace cfc::imageio
