#pragma once

#include <cstdint>
#include <vector>

#include "warp4d/camera.hpp"
#include "warp4d/kinematics.hpp"
#include "warp4d/tensor.hpp"

namespace warp4d {

// Capsule (cylinder with spherical caps) between p0 and p1; p0 == p1
// degenerates to a sphere.
struct CapsulePrim {
    Vec3 p0, p1;
    double radius = 0.0;
    Vec3 color{0.5, 0.5, 0.5};
};

// Infinite textured plane; `normal` faces the cameras, tex_u/tex_v are an
// orthonormal in-plane basis for the procedural texture, whose smooth
// band-limited pattern is fully determined by texture_seed.
struct BackgroundPlane {
    Vec3 point{};
    Vec3 normal{0, 0, 1};
    Vec3 tex_u{1, 0, 0};
    Vec3 tex_v{0, 1, 0};
    uint64_t texture_seed = 0;
};

struct RenderResult {
    Tensor rgb;      // (H, W, 3), unit range
    Tensor depth;    // (H, W), camera-frame depth of the nearest hit; 0 where no hit
    Tensor fg_mask;  // (H, W), 1 where the nearest hit is a chain primitive
};

// Capsules occupied by the chain at the given joint angles (one per link).
std::vector<CapsulePrim> chain_capsules(const KinematicChain& chain,
                                        const std::vector<double>& angles);

// Smooth procedural texture color of the plane at a world point on it.
Vec3 background_color(const BackgroundPlane& bg, const Vec3& point);

// Analytic ray-cast render: per pixel the nearest capsule/plane
// intersection gives depth (exact camera-frame depth) and color; capsule
// shading is Lambert from a fixed world-space directional light, so a
// surface point has the same color from every viewpoint.
RenderResult render(const std::vector<CapsulePrim>& prims, const BackgroundPlane& bg,
                    const Camera& cam, int h, int w);

// Smallest positive ray parameter at which ro + t*rd enters the capsule,
// +inf when it misses; `normal` receives the outward surface normal at the
// hit. Exposed for oracle tests.
double ray_capsule(const Vec3& ro, const Vec3& rd, const CapsulePrim& cap, Vec3* normal);

// Per-pixel cross-view visibility: entry (y, x) is 1 when the surface
// point seen by `tgt` at that pixel is also visible in `src`, judged by
// projecting the point into src and comparing its src-frame depth against
// src's depth map at the four surrounding pixels (relative tolerance
// rel_tol). Pixels with invalid target depth, or projecting behind or
// outside src, are 0.
Tensor cross_view_visibility(const Tensor& depth_tgt, const Camera& tgt,
                             const Tensor& depth_src, const Camera& src,
                             double rel_tol = 0.01);

}  // namespace warp4d
