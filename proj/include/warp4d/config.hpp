#pragma once

#include <cstdint>
#include <string>

#include "warp4d/flowmatch.hpp"
#include "warp4d/schedule.hpp"
#include "warp4d/synthdata.hpp"

namespace warp4d {

// A GenConfig sized for fast in-memory experiments (small frames, short
// clips, few links) rather than full dataset generation.
GenConfig small_scene_gen();

struct GenDataParams {
    int num_samples = 2;
    int workers = 1;
    GenConfig gen = small_scene_gen();
};

struct WarpParams {
    std::string data;  // one generated sample directory
    int frame = -1;    // -1 = all frames
};

// Pool construction shared by scene training, sampling, and evaluation.
struct SceneBuildParams {
    int samples = 4;
    uint64_t pool_seed = 9000;
    SceneTokenConfig tokens;
    GenConfig gen = small_scene_gen();
};

struct TrainParams {
    std::string task = "toy";  // "toy" or "scene"
    TrainConfig train;
    SceneBuildParams scene;
};

struct SampleParams {
    std::string checkpoint;
    std::string task = "toy";
    int count = 10000;   // toy points
    int frames = 4;      // scene elements to generate
    int ode_steps = 50;
    double alpha = 0.5;
    NoiseScheduleConfig schedule;
    std::string velocity_mode = "plain";
    SceneBuildParams scene;
};

struct EvalParams {
    std::string checkpoint;
    int ode_steps = 50;
    double alpha = 0.5;
    NoiseScheduleConfig schedule;
    std::string velocity_mode = "plain";
    SceneBuildParams scene;
};

struct ChecksParams {
    uint64_t seed = 1;
};

// One structured-text (JSON) file configures every subcommand. Unknown keys
// anywhere in the tree are rejected so typos cannot silently fall back to
// defaults.
struct RunConfig {
    uint64_t seed = 1;
    std::string out = "out";
    GenDataParams gen_data;
    WarpParams warp;
    TrainParams train;
    SampleParams sample;
    EvalParams eval;
    ChecksParams checks;
};

RunConfig load_run_config(const std::string& path);
// Serializes every section with its final values; reloading the result
// reproduces the run.
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace warp4d
