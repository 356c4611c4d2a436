#pragma once

#include <vector>

#include "warp4d/camera.hpp"
#include "warp4d/tensor.hpp"

namespace warp4d {

// Colored world-frame point set with per-point source-pixel provenance
// ((row, col) of the pixel it was lifted from).
struct PointCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;
    std::vector<std::array<int, 2>> source_pixel;

    size_t size() const { return positions.size(); }
};

// One target-view frame produced by forward splatting. Invariants:
// m_geo[p] = 1 exactly where zbuf[p] is finite; rgb is 0 wherever
// m_geo[p] = 0.
struct WarpedFrame {
    Tensor rgb;   // (H, W, 3)
    Tensor m_geo; // (H, W), binary
    Tensor zbuf;  // (H, W), +inf where no point landed
    int dropped_behind_camera = 0;
};

// Lifts every valid-depth pixel (depth positive and finite) to a world
// point carrying the pixel's color. Throws DimensionError when rgb and
// depth disagree on H x W.
PointCloud depth_to_pointcloud(const Tensor& rgb, const Tensor& depth, const Camera& cam);

// Splats the cloud into the target view with nearest-pixel rounding and a
// z-buffer. On exact depth ties the point with the lower source-pixel
// row-major index wins, which makes the result independent of point order.
// Points on or behind the camera plane are dropped and counted.
WarpedFrame forward_warp(const PointCloud& cloud, const Camera& tgt, int h, int w);

// Per-frame depth_to_pointcloud + forward_warp, order preserved. Throws
// DimensionError when frame counts or shapes disagree.
std::vector<WarpedFrame> warp_video(const Tensor& src, const Tensor& depths,
                                    const Camera& src_cam, const Camera& tgt_cam);

}  // namespace warp4d
