#include "warp4d/camera.hpp"

#include <cmath>
#include <string>

#include "warp4d/rng.hpp"

namespace warp4d {

Camera Camera::from_intrinsics(double fx, double fy, double cx, double cy, const Mat3& R,
                               const Vec3& T) {
    Camera c;
    c.K = Mat3::from_rows({fx, 0, cx}, {0, fy, cy}, {0, 0, 1});
    c.R = R;
    c.T = T;
    c.validate();
    return c;
}

void Camera::validate() const {
    if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0)
        throw InvalidCameraError("camera: K must be upper-triangular");
    if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
        throw InvalidCameraError("camera: K needs positive focal lengths");
    if (K(2, 2) != 1.0) throw InvalidCameraError("camera: K[2][2] must be 1");
    if (R.orthonormality_error() > 1e-9)
        throw InvalidRotationError("camera: R is not orthonormal");
    if (R.det() < 0.0) throw InvalidRotationError("camera: R must have det +1");
}

Vec3 unproject(const Pixel& p, const Camera& cam) {
    if (!(p.z > 0.0)) throw DomainError("unproject: depth must be positive");
    const Mat3& K = cam.K;
    const double det = K.det();
    if (std::abs(det) < 1e-300) throw InvalidCameraError("unproject: singular K");
    // K is upper-triangular in every valid camera, so back-substitution is
    // exact and cheap; fall back to the general inverse otherwise.
    if (K(1, 0) == 0.0 && K(2, 0) == 0.0 && K(2, 1) == 0.0) {
        const double w = 1.0 / K(2, 2);
        const double y = (p.u.y - K(1, 2) * w) / K(1, 1);
        const double x = (p.u.x - K(0, 1) * y - K(0, 2) * w) / K(0, 0);
        return Vec3{x, y, w} * p.z;
    }
    return (K.inverse() * Vec3{p.u.x, p.u.y, 1.0}) * p.z;
}

Vec3 apply_ego_motion(const Vec3& p, const Mat3& R, const Vec3& T) {
    if (R.orthonormality_error() > 1e-9)
        throw InvalidRotationError("apply_ego_motion: R is not orthonormal");
    return R * p + T;
}

Vec3 centroid(const std::vector<Vec3>& points) {
    if (points.empty()) throw DomainError("centroid: empty point set");
    Vec3 s{};
    for (const Vec3& p : points) s += p;
    return s / static_cast<double>(points.size());
}

Vec2 project(const Vec3& p, const Camera& cam, PointFrame frame) {
    const Vec3 pc = frame == PointFrame::World ? cam.world_to_camera(p) : p;
    if (!(pc.z > 0.0))
        throw BehindCameraError("project: point on or behind the camera plane");
    const Vec3 h = cam.K * pc;
    return {h.x / h.z, h.y / h.z};
}

Pose relative_motion(const Camera& src, const Camera& tgt) {
    Mat3 r = tgt.R * src.R.transposed();
    return {r, tgt.T - r * src.T};
}

Camera make_look_at_camera(const Vec3& pos, const Vec3& target, const Vec3& world_up,
                           double fx, double fy, double cx, double cy) {
    const Vec3 fwd = (target - pos).normalized();
    const Vec3 right_raw = fwd.cross(world_up);
    if (right_raw.norm() < 1e-12)
        throw DomainError("make_look_at_camera: view direction parallel to world up");
    const Vec3 right = right_raw.normalized();
    const Vec3 down = fwd.cross(right);
    Camera cam;
    cam.K = Mat3::from_rows({fx, 0, cx}, {0, fy, cy}, {0, 0, 1});
    cam.R = Mat3::from_rows(right, down, fwd);
    cam.T = -(cam.R * pos);
    cam.validate();
    return cam;
}

AnchorResult anchor_track(const std::vector<Pixel>& centers, const Camera& src_cam,
                          const Camera& tgt_cam, int consensus_size, uint64_t seed) {
    if (consensus_size < 1) throw DomainError("anchor_track: consensus_size must be >= 1");
    const int n = static_cast<int>(centers.size());
    if (n < consensus_size)
        throw InsufficientFramesError("anchor_track: " + std::to_string(n) +
                                      " frames < consensus size " +
                                      std::to_string(consensus_size));

    Rng rng(seed);
    AnchorResult out;
    out.sample_indices = rng.sample_without_replacement(n, consensus_size);

    const Pose rel = relative_motion(src_cam, tgt_cam);
    std::vector<Vec3> transformed;
    transformed.reserve(out.sample_indices.size());
    for (int k : out.sample_indices) {
        const Pixel& px = centers[static_cast<size_t>(k)];
        if (!(px.z > 0.0))
            throw DomainError("anchor_track: non-positive depth at frame " +
                              std::to_string(k));
        const Vec3 p_tgt = rel.apply(unproject(px, src_cam));
        if (!(p_tgt.z > 0.0))
            throw BehindCameraError(
                "anchor_track: frame " + std::to_string(k) + " maps behind the target camera",
                k);
        transformed.push_back(p_tgt);
    }

    out.anchor3d = centroid(transformed);
    if (!(out.anchor3d.z > 0.0))
        throw BehindCameraError("anchor_track: averaged point behind the target camera", -1);
    out.anchor2d = project(out.anchor3d, tgt_cam, PointFrame::Camera);
    return out;
}

}  // namespace warp4d
