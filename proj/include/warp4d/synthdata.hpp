#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "warp4d/camera.hpp"
#include "warp4d/kinematics.hpp"
#include "warp4d/render.hpp"
#include "warp4d/tensor.hpp"

namespace warp4d {

// Generation settings for one dataset. Chains are randomized within the
// link-count bounds; the two cameras share intrinsics and look at the
// arm's workspace from azimuths cam_b_azimuth_offset_deg apart, with view
// B pulled back by cam_b_distance_scale so its sampling of the scene is
// slightly coarser than view A's (keeps forward-splat coverage dense).
struct GenConfig {
    int n_frames = 49;
    int height = 384;
    int width = 672;
    int min_links = 3;
    int max_links = 7;
    double step_fraction = 0.01;
    double focal_scale = 1.35;         // focal length in pixels = focal_scale * width
    double cam_distance_factor = 3.0;  // camera distance = factor * arm reach
    double cam_elevation_deg = 22.0;
    double cam_azimuth_deg = 0.0;
    double cam_b_azimuth_offset_deg = 10.0;
    double cam_b_distance_scale = 1.06;
    double bg_distance_factor = 1.2;   // backdrop distance behind the workspace

    void validate() const;
};

// One generated two-view clip with full ground truth.
struct SceneSample {
    Tensor frames_a, frames_b;  // (F, H, W, 3)
    Tensor depths_a, depths_b;  // (F, H, W)
    Tensor masks_a, masks_b;    // (F, H, W)
    Camera cam_a, cam_b;
    std::vector<std::vector<double>> joint_traj;  // F x J
    std::vector<Vec3> center_world;  // per-frame chain center (mean of link midpoints)
    KinematicChain chain;
    BackgroundPlane background;
    uint64_t seed = 0;
    std::string caption;
};

// Deterministic sample builder: chain spec, trajectory, cameras, backdrop
// texture, and renders are all derived from `seed` through named
// substreams. Identical (cfg, seed) gives identical tensors.
SceneSample generate_sample(const GenConfig& cfg, uint64_t seed);

// On-disk layout under sample_dir:
//   view_a/frame_%04d.png  depth_%04d.f32  mask_%04d.png  camera.json
//   view_b/...             meta.json (seed, caption, chain, centers)
void write_sample(const std::string& sample_dir, const SceneSample& s);

struct ViewData {
    Tensor frames;  // (F, H, W, 3)
    Tensor depths;  // (F, H, W)
    Tensor masks;   // (F, H, W)
    Camera cam;
};
ViewData load_view(const std::string& view_dir);

struct SampleMeta {
    uint64_t seed = 0;
    std::string caption;
    int n_frames = 0;
    std::vector<Vec3> center_world;
};
SampleMeta load_meta(const std::string& sample_dir);

// Generates samples sample_00000 .. sample_<n-1> under out_root. Each
// sample's seed is derived from master_seed and its index alone, so any
// worker count produces byte-identical trees. Returns the sample dirs in
// index order.
std::vector<std::string> generate_dataset(const GenConfig& cfg, const std::string& out_root,
                                          int num_samples, uint64_t master_seed, int workers);

}  // namespace warp4d
