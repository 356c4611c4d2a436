#pragma once

#include <cstdint>
#include <vector>

#include "warp4d/vec.hpp"

namespace warp4d {

// One revolute link: the joint rotates by the frame angle about `axis`
// (expressed in the parent frame), then the link body extends along the
// rotated local +x by `length`.
struct Link {
    double length = 0.0;
    double radius = 0.0;
    Vec3 axis{0, 0, 1};
    double limit_lo = 0.0;
    double limit_hi = 0.0;
    Vec3 color{0.5, 0.5, 0.5};
};

struct KinematicChain {
    std::vector<Link> links;
    Pose base_pose;

    int joint_count() const { return static_cast<int>(links.size()); }
    // Throws DomainError when a length/radius is non-positive or a joint
    // has limit_lo >= limit_hi.
    void validate() const;
};

// Serial-chain composition. Returns one pose per link: its origin is the
// link's start (the joint location) and its +x axis points along the link
// body, so the link occupies the segment [pose.t, pose.apply({length,0,0})].
// Throws DimensionError on an angle-count mismatch and LimitViolationError
// (naming the joint) when an angle is outside its limits.
std::vector<Pose> forward_kinematics(const KinematicChain& chain,
                                     const std::vector<double>& angles);

// Position of the tip of the last link (the end effector) for the given
// joint angles.
Vec3 end_effector(const KinematicChain& chain, const std::vector<double>& angles);

// Joint-space trajectory of n_frames rows: frame 0 is the mid-range pose,
// and every subsequent frame perturbs each joint by an independent uniform
// draw in ±step_fraction*(hi-lo), clamped to the limits. Deterministic in
// `seed`. step_fraction must lie in [0, 1] (0 gives a constant trajectory).
std::vector<std::vector<double>> random_motion(const KinematicChain& chain, int n_frames,
                                               double step_fraction, uint64_t seed);

}  // namespace warp4d
