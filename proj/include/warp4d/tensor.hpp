#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "warp4d/errors.hpp"

namespace warp4d {

// Dense row-major tensor of doubles. Convention used throughout the
// toolkit: the last dimension is channels, every leading dimension is a
// spatial/temporal site. Images are (H, W, C), videos (F, H, W, C),
// per-site fields such as masks and confidence drop the channel dim.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::initializer_list<int> shape, double fill = 0.0)
        : Tensor(std::vector<int>(shape), fill) {}

    static Tensor image(int h, int w, int c) { return Tensor({h, w, c}); }
    static Tensor video(int f, int h, int w, int c) { return Tensor({f, h, w, c}); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(int i, int j) { return data_[idx2(i, j)]; }
    double at(int i, int j) const { return data_[idx2(i, j)]; }
    double& at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    double at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
    double& at(int f, int i, int j, int k) { return data_[idx4(f, i, j, k)]; }
    double at(int f, int i, int j, int k) const { return data_[idx4(f, i, j, k)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // Copy of frame f of a (F, ...) tensor, shape (...).
    Tensor frame(int f) const;

    // Number of sites (product of all dims but the last); 1 for rank 0.
    size_t site_count() const;

    void fill(double v);

private:
    size_t idx2(int i, int j) const {
        return static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j);
    }
    size_t idx3(int i, int j, int k) const {
        return (static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) +
                static_cast<size_t>(j)) *
                   static_cast<size_t>(shape_[2]) +
               static_cast<size_t>(k);
    }
    size_t idx4(int f, int i, int j, int k) const {
        return ((static_cast<size_t>(f) * static_cast<size_t>(shape_[1]) +
                 static_cast<size_t>(i)) *
                    static_cast<size_t>(shape_[2]) +
                static_cast<size_t>(j)) *
                   static_cast<size_t>(shape_[3]) +
               static_cast<size_t>(k);
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Exact area-weighted resampling of an (H, W) or (H, W, C) tensor. Each
// output pixel is the average of the input over its footprint rectangle,
// with fractional edge pixels weighted by overlap. Mass-preserving for
// any scale factor.
Tensor area_resize(const Tensor& src, int out_h, int out_w);

// Bilinear resampling with the half-pixel-center convention: output pixel
// (i, j) samples the input at ((i + 0.5) * sh - 0.5, (j + 0.5) * sw - 0.5),
// clamped at the borders.
Tensor bilinear_resize(const Tensor& src, int out_h, int out_w);

// Box blur of an (H, W) tensor with window (2r+1)^2; near the border the
// mean is taken over the in-bounds part of the window. r = 0 is identity.
Tensor box_blur(const Tensor& src, int radius);

// Binary erosion of an (H, W) mask by `steps` passes of a 3x3 structuring
// element; out-of-bounds neighbors count as background.
Tensor erode(const Tensor& mask, int steps);

}  // namespace warp4d
