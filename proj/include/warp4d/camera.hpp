#pragma once

#include <cstdint>
#include <vector>

#include "warp4d/errors.hpp"
#include "warp4d/vec.hpp"

namespace warp4d {

// Pinhole camera. Convention: +x right, +y down, +z forward (the camera
// looks along +z); pixel (0,0) is the top-left corner, integer pixel
// coordinates name pixel centers. The pose maps world to camera
// coordinates: X_cam = R * X_world + T.
struct Camera {
    Mat3 K = Mat3::identity();
    Mat3 R = Mat3::identity();
    Vec3 T{};

    static Camera from_intrinsics(double fx, double fy, double cx, double cy,
                                  const Mat3& R = Mat3::identity(), const Vec3& T = {});

    // Throws InvalidCameraError / InvalidRotationError when the intrinsic
    // or rotation invariants are violated (K upper-triangular, positive
    // diagonal, K[2][2]=1; R orthonormal with det +1 within 1e-9).
    void validate() const;

    Vec3 world_to_camera(const Vec3& p_world) const { return R * p_world + T; }
    Vec3 camera_to_world(const Vec3& p_cam) const { return R.transposed() * (p_cam - T); }
};

// A continuous pixel location plus the depth of the surface seen there.
struct Pixel {
    Vec2 u{};
    double z = 0.0;
};

enum class PointFrame { Camera, World };

struct AnchorResult {
    Vec3 anchor3d{};               // target-camera-frame averaged point
    Vec2 anchor2d{};               // its projection in the target image
    std::vector<int> sample_indices;  // the frame subset used
};

// Lifts a pixel with depth to a camera-frame 3D point: P = z * K^-1 * (u,1).
// Throws DomainError on non-positive depth, InvalidCameraError on singular K.
Vec3 unproject(const Pixel& p, const Camera& cam);

// Rigid motion R * P + T. Throws InvalidRotationError when R is not
// orthonormal within 1e-9.
Vec3 apply_ego_motion(const Vec3& p, const Mat3& R, const Vec3& T);

// Componentwise mean. Throws DomainError on an empty sequence.
Vec3 centroid(const std::vector<Vec3>& points);

// Perspective projection through cam.K. `frame` states whether P is given
// in the camera frame or the world frame (in which case the pose is
// applied first). Throws BehindCameraError when the camera-frame depth is
// not positive.
Vec2 project(const Vec3& p, const Camera& cam, PointFrame frame = PointFrame::Camera);

// Relative transform taking source-camera coordinates to target-camera
// coordinates: R_rel = R_tgt * R_src^T, T_rel = T_tgt - R_rel * T_src.
Pose relative_motion(const Camera& src, const Camera& tgt);

// Camera at `pos` looking at `target` with the image-vertical aligned
// against world_up (y runs down in the image). Throws DomainError when the
// view direction is parallel to world_up.
Camera make_look_at_camera(const Vec3& pos, const Vec3& target, const Vec3& world_up,
                           double fx, double fy, double cx, double cy);

// Multi-frame anchor estimate: samples `consensus_size` frame indices
// without replacement (seeded), unprojects each frame's center pixel
// through the source camera, maps it into the target camera frame,
// averages, and reprojects. Throws InsufficientFramesError when there are
// fewer frames than consensus_size, and BehindCameraError (carrying the
// offending frame index) when a transformed point lands on or behind the
// target camera plane.
AnchorResult anchor_track(const std::vector<Pixel>& centers, const Camera& src_cam,
                          const Camera& tgt_cam, int consensus_size, uint64_t seed);

}  // namespace warp4d
