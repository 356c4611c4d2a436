#pragma once

#include "warp4d/tensor.hpp"

namespace warp4d {

// Mean squared / absolute error over all entries of same-shape tensors.
double mse(const Tensor& a, const Tensor& b);
double mae(const Tensor& a, const Tensor& b);

// MSE restricted to sites where mask == value (mask shape = leading dims
// of a). Throws DomainError when no site matches.
double masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask, double value);

// Peak signal-to-noise ratio for unit-range images: 10*log10(1/MSE),
// capped at 99 dB for identical inputs.
double psnr(const Tensor& a, const Tensor& b);

// Mean structural similarity with the standard 11x11 Gaussian window
// (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1. Inputs are (H,W) or
// (H,W,C) (channels averaged); the mean runs over pixels whose full window
// fits inside the frame, so both dims must be >= 11.
double ssim(const Tensor& a, const Tensor& b);

// SSIM restricted to valid-window pixels where mask == value.
// Throws DomainError when no valid-window site matches.
double masked_ssim(const Tensor& a, const Tensor& b, const Tensor& mask, double value);

}  // namespace warp4d
