#include "warp4d/kinematics.hpp"

#include <algorithm>
#include <string>

#include "warp4d/errors.hpp"
#include "warp4d/rng.hpp"

namespace warp4d {

void KinematicChain::validate() const {
    for (size_t i = 0; i < links.size(); ++i) {
        const Link& l = links[i];
        if (!(l.length > 0.0))
            throw DomainError("chain: link " + std::to_string(i) + " has non-positive length");
        if (!(l.radius > 0.0))
            throw DomainError("chain: link " + std::to_string(i) + " has non-positive radius");
        if (!(l.limit_lo < l.limit_hi))
            throw DomainError("chain: link " + std::to_string(i) + " needs limit_lo < limit_hi");
        if (!(l.axis.norm() > 0.0))
            throw DomainError("chain: link " + std::to_string(i) + " has a zero joint axis");
    }
}

std::vector<Pose> forward_kinematics(const KinematicChain& chain,
                                     const std::vector<double>& angles) {
    if (angles.size() != chain.links.size())
        throw DimensionError("forward_kinematics: got " + std::to_string(angles.size()) +
                             " angles for " + std::to_string(chain.links.size()) + " joints");
    std::vector<Pose> out;
    out.reserve(chain.links.size());
    Pose cur = chain.base_pose;
    for (size_t i = 0; i < chain.links.size(); ++i) {
        const Link& l = chain.links[i];
        const double a = angles[i];
        if (a < l.limit_lo || a > l.limit_hi)
            throw LimitViolationError("forward_kinematics: joint " + std::to_string(i) +
                                          " angle outside its limits",
                                      static_cast<int>(i));
        cur = cur.compose(Pose{Mat3::axis_angle(l.axis, a), {}});
        out.push_back(cur);
        cur = cur.compose(Pose{Mat3::identity(), {l.length, 0, 0}});
    }
    return out;
}

Vec3 end_effector(const KinematicChain& chain, const std::vector<double>& angles) {
    if (chain.links.empty()) return chain.base_pose.t;
    const std::vector<Pose> poses = forward_kinematics(chain, angles);
    return poses.back().apply({chain.links.back().length, 0, 0});
}

std::vector<std::vector<double>> random_motion(const KinematicChain& chain, int n_frames,
                                               double step_fraction, uint64_t seed) {
    if (n_frames < 1) throw DomainError("random_motion: need at least one frame");
    if (step_fraction < 0.0 || step_fraction > 1.0)
        throw DomainError("random_motion: step_fraction must lie in [0, 1]");
    chain.validate();
    Rng rng(seed);
    const size_t j = chain.links.size();
    std::vector<std::vector<double>> traj(static_cast<size_t>(n_frames),
                                          std::vector<double>(j));
    for (size_t k = 0; k < j; ++k)
        traj[0][k] = 0.5 * (chain.links[k].limit_lo + chain.links[k].limit_hi);
    for (int f = 1; f < n_frames; ++f)
        for (size_t k = 0; k < j; ++k) {
            const Link& l = chain.links[k];
            const double step = step_fraction * (l.limit_hi - l.limit_lo);
            const double a = traj[static_cast<size_t>(f - 1)][k] + rng.uniform(-step, step);
            traj[static_cast<size_t>(f)][k] = std::clamp(a, l.limit_lo, l.limit_hi);
        }
    return traj;
}

}  // namespace warp4d
