#pragma once

#include <string>

#include "netscope/tensor.hpp"

namespace netscope {

// Binary PPM (P6, maxval 255). Tensors are (1,3,H,W) with values in [0,1];
// writing clamps and rounds, reading scales bytes by 1/255.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

// Nearest-neighbour integer upscale, used for filter/patch exports.
Tensor upscale_nearest(const Tensor& image, int factor);

// Affine rescale of arbitrary values into [0,1]; constant images map to 0.5.
Tensor minmax_normalize(const Tensor& image);

}  // namespace netscope
