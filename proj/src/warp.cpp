#include "warp4d/warp.hpp"

#include <cmath>
#include <limits>

namespace warp4d {

PointCloud depth_to_pointcloud(const Tensor& rgb, const Tensor& depth, const Camera& cam) {
    if (rgb.ndim() != 3 || rgb.dim(2) != 3)
        throw DimensionError("depth_to_pointcloud: rgb must be (H,W,3)");
    if (depth.ndim() != 2 || depth.dim(0) != rgb.dim(0) || depth.dim(1) != rgb.dim(1))
        throw DimensionError("depth_to_pointcloud: depth must be (H,W) matching rgb");
    const int h = rgb.dim(0), w = rgb.dim(1);
    PointCloud cloud;
    cloud.positions.reserve(static_cast<size_t>(h) * w);
    cloud.colors.reserve(static_cast<size_t>(h) * w);
    cloud.source_pixel.reserve(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double z = depth.at(y, x);
            if (!(z > 0.0) || !std::isfinite(z)) continue;
            const Vec3 p_cam = unproject({{static_cast<double>(x), static_cast<double>(y)}, z},
                                         cam);
            cloud.positions.push_back(cam.camera_to_world(p_cam));
            cloud.colors.push_back({rgb.at(y, x, 0), rgb.at(y, x, 1), rgb.at(y, x, 2)});
            cloud.source_pixel.push_back({y, x});
        }
    return cloud;
}

WarpedFrame forward_warp(const PointCloud& cloud, const Camera& tgt, int h, int w) {
    if (h <= 0 || w <= 0) throw DimensionError("forward_warp: non-positive frame size");
    WarpedFrame out;
    out.rgb = Tensor({h, w, 3});
    out.m_geo = Tensor({h, w});
    out.zbuf = Tensor({h, w}, std::numeric_limits<double>::infinity());
    // Winner provenance per pixel, for the order-independent tie-break.
    std::vector<std::array<int, 2>> winner(static_cast<size_t>(h) * w,
                                           {std::numeric_limits<int>::max(),
                                            std::numeric_limits<int>::max()});
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 pc = tgt.world_to_camera(cloud.positions[i]);
        if (!(pc.z > 0.0)) {
            ++out.dropped_behind_camera;
            continue;
        }
        const Vec3 hom = tgt.K * pc;
        const double ux = hom.x / hom.z, uy = hom.y / hom.z;
        const long px = std::lround(ux), py = std::lround(uy);
        if (px < 0 || px >= w || py < 0 || py >= h) continue;
        const size_t idx = static_cast<size_t>(py) * w + static_cast<size_t>(px);
        const double zbest = out.zbuf[idx];
        const bool wins = pc.z < zbest ||
                          (pc.z == zbest && cloud.source_pixel[i] < winner[idx]);
        if (!wins) continue;
        out.zbuf[idx] = pc.z;
        winner[idx] = cloud.source_pixel[i];
        out.m_geo[idx] = 1.0;
        const Vec3& c = cloud.colors[i];
        out.rgb.at(static_cast<int>(py), static_cast<int>(px), 0) = c.x;
        out.rgb.at(static_cast<int>(py), static_cast<int>(px), 1) = c.y;
        out.rgb.at(static_cast<int>(py), static_cast<int>(px), 2) = c.z;
    }
    return out;
}

std::vector<WarpedFrame> warp_video(const Tensor& src, const Tensor& depths,
                                    const Camera& src_cam, const Camera& tgt_cam) {
    if (src.ndim() != 4 || src.dim(3) != 3)
        throw DimensionError("warp_video: src must be (F,H,W,3)");
    if (depths.ndim() != 3) throw DimensionError("warp_video: depths must be (F,H,W)");
    if (src.dim(0) != depths.dim(0))
        throw DimensionError("warp_video: frame count mismatch");
    if (src.dim(1) != depths.dim(1) || src.dim(2) != depths.dim(2))
        throw DimensionError("warp_video: frame shape mismatch");
    std::vector<WarpedFrame> out;
    out.reserve(static_cast<size_t>(src.dim(0)));
    for (int f = 0; f < src.dim(0); ++f) {
        const PointCloud cloud = depth_to_pointcloud(src.frame(f), depths.frame(f), src_cam);
        out.push_back(forward_warp(cloud, tgt_cam, src.dim(1), src.dim(2)));
    }
    return out;
}

}  // namespace warp4d
