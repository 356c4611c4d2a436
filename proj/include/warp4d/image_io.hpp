#pragma once

#include <string>

#include "warp4d/tensor.hpp"

namespace warp4d {

// 8-bit PNG output. (H,W,3) tensors become RGB files, (H,W) tensors
// grayscale; values are clamped to [0,1] and rounded to the nearest of the
// 256 levels. Throws IoError on failure.
void write_png(const std::string& path, const Tensor& img);

// Reads a PNG as unit-range RGB (H,W,3), converting grayscale/palette
// inputs to RGB. Throws IoError on failure.
Tensor read_png_rgb(const std::string& path);

// Reads a PNG as unit-range grayscale (H,W). Throws IoError on failure.
Tensor read_png_gray(const std::string& path);

// Raw float-map container used for depth and z-buffers: 4 magic bytes
// "ZBUF", then height and width as 32-bit little-endian unsigned values,
// then H*W row-major IEEE-754 32-bit little-endian floats.
void write_zbuf(const std::string& path, const Tensor& map);
Tensor read_zbuf(const std::string& path);

}  // namespace warp4d
