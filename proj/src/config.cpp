#include "warp4d/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string>

#include <json.hpp>

namespace warp4d {

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
    std::ifstream fs(path);
    if (!fs) throw IoError("config: cannot open " + path);
    json j;
    try {
        fs >> j;
    } catch (const json::exception& e) {
        throw IoError("config: " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw DomainError("config: section '" + where + "' must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) known = true;
        if (!known)
            throw DomainError("config: unknown key '" + item.key() + "' in section '" + where + "'");
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw DomainError("config: key '" + std::string(key) + "' has the wrong type");
    }
}

void parse_gen(const json& j, const std::string& where, GenConfig& g) {
    check_keys(j, where,
               {"n_frames", "height", "width", "min_links", "max_links", "step_fraction",
                "focal_scale", "cam_distance_factor", "cam_elevation_deg", "cam_azimuth_deg",
                "cam_b_azimuth_offset_deg", "cam_b_distance_scale", "bg_distance_factor"});
    get(j, "n_frames", g.n_frames);
    get(j, "height", g.height);
    get(j, "width", g.width);
    get(j, "min_links", g.min_links);
    get(j, "max_links", g.max_links);
    get(j, "step_fraction", g.step_fraction);
    get(j, "focal_scale", g.focal_scale);
    get(j, "cam_distance_factor", g.cam_distance_factor);
    get(j, "cam_elevation_deg", g.cam_elevation_deg);
    get(j, "cam_azimuth_deg", g.cam_azimuth_deg);
    get(j, "cam_b_azimuth_offset_deg", g.cam_b_azimuth_offset_deg);
    get(j, "cam_b_distance_scale", g.cam_b_distance_scale);
    get(j, "bg_distance_factor", g.bg_distance_factor);
}

json dump_gen(const GenConfig& g) {
    return json{{"n_frames", g.n_frames},
                {"height", g.height},
                {"width", g.width},
                {"min_links", g.min_links},
                {"max_links", g.max_links},
                {"step_fraction", g.step_fraction},
                {"focal_scale", g.focal_scale},
                {"cam_distance_factor", g.cam_distance_factor},
                {"cam_elevation_deg", g.cam_elevation_deg},
                {"cam_azimuth_deg", g.cam_azimuth_deg},
                {"cam_b_azimuth_offset_deg", g.cam_b_azimuth_offset_deg},
                {"cam_b_distance_scale", g.cam_b_distance_scale},
                {"bg_distance_factor", g.bg_distance_factor}};
}

void parse_schedule(const json& j, const std::string& where, NoiseScheduleConfig& s,
                    std::string* mode) {
    check_keys(j, where, {"sigma_low", "sigma_high", "velocity_mode"});
    get(j, "sigma_low", s.sigma_low);
    get(j, "sigma_high", s.sigma_high);
    if (mode) get(j, "velocity_mode", *mode);
    if (mode) velocity_mode_from_string(*mode);  // reject unknown names early
}

json dump_schedule(const NoiseScheduleConfig& s, const std::string& mode) {
    return json{{"sigma_low", s.sigma_low}, {"sigma_high", s.sigma_high}, {"velocity_mode", mode}};
}

void parse_tokens(const json& j, const std::string& where, SceneTokenConfig& t) {
    check_keys(j, where, {"latent_h", "latent_w", "blur_radius", "fg_threshold"});
    get(j, "latent_h", t.latent_h);
    get(j, "latent_w", t.latent_w);
    get(j, "blur_radius", t.blur_radius);
    get(j, "fg_threshold", t.fg_threshold);
}

json dump_tokens(const SceneTokenConfig& t) {
    return json{{"latent_h", t.latent_h},
                {"latent_w", t.latent_w},
                {"blur_radius", t.blur_radius},
                {"fg_threshold", t.fg_threshold}};
}

void parse_scene(const json& j, const std::string& where, SceneBuildParams& s) {
    check_keys(j, where, {"samples", "pool_seed", "tokens", "gen"});
    get(j, "samples", s.samples);
    get(j, "pool_seed", s.pool_seed);
    if (j.contains("tokens")) parse_tokens(j.at("tokens"), where + ".tokens", s.tokens);
    if (j.contains("gen")) parse_gen(j.at("gen"), where + ".gen", s.gen);
}

json dump_scene(const SceneBuildParams& s) {
    return json{{"samples", s.samples},
                {"pool_seed", s.pool_seed},
                {"tokens", dump_tokens(s.tokens)},
                {"gen", dump_gen(s.gen)}};
}

}  // namespace

GenConfig small_scene_gen() {
    GenConfig g;
    g.n_frames = 9;
    g.height = 96;
    g.width = 168;
    g.min_links = 3;
    g.max_links = 5;
    g.step_fraction = 0.05;
    // Wider stereo baseline: enough parallax for cross-view benchmarks while the
    // nearest-pixel splat still covers the target frame densely.
    g.cam_b_azimuth_offset_deg = 18.0;
    return g;
}

RunConfig load_run_config(const std::string& path) {
    const json j = read_json(path);
    check_keys(j, "(top level)", {"seed", "out", "gen-data", "warp", "train", "sample", "eval", "checks"});
    RunConfig cfg;
    get(j, "seed", cfg.seed);
    get(j, "out", cfg.out);

    if (j.contains("gen-data")) {
        const json& g = j.at("gen-data");
        check_keys(g, "gen-data", {"num_samples", "workers", "gen"});
        get(g, "num_samples", cfg.gen_data.num_samples);
        get(g, "workers", cfg.gen_data.workers);
        if (g.contains("gen")) parse_gen(g.at("gen"), "gen-data.gen", cfg.gen_data.gen);
    }
    if (j.contains("warp")) {
        const json& w = j.at("warp");
        check_keys(w, "warp", {"data", "frame"});
        get(w, "data", cfg.warp.data);
        get(w, "frame", cfg.warp.frame);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train",
                   {"task", "steps", "batch_size", "lr", "momentum", "stage", "zero_confidence",
                    "est_hidden", "net", "schedule", "fusion", "scene"});
        get(t, "task", cfg.train.task);
        get(t, "steps", cfg.train.train.steps);
        get(t, "batch_size", cfg.train.train.batch_size);
        get(t, "lr", cfg.train.train.lr);
        get(t, "momentum", cfg.train.train.momentum);
        get(t, "stage", cfg.train.train.stage);
        get(t, "zero_confidence", cfg.train.train.zero_confidence);
        get(t, "est_hidden", cfg.train.train.est_hidden);
        if (t.contains("net")) {
            const json& n = t.at("net");
            check_keys(n, "train.net", {"dim", "blocks", "lambda"});
            get(n, "dim", cfg.train.train.net.dim);
            get(n, "blocks", cfg.train.train.net.blocks);
            get(n, "lambda", cfg.train.train.net.lambda);
        }
        if (t.contains("schedule")) {
            std::string mode = to_string(cfg.train.train.velocity_mode);
            parse_schedule(t.at("schedule"), "train.schedule", cfg.train.train.schedule, &mode);
            cfg.train.train.velocity_mode = velocity_mode_from_string(mode);
        }
        if (t.contains("fusion")) {
            const json& f = t.at("fusion");
            check_keys(f, "train.fusion", {"alpha_max", "ramp_steps"});
            get(f, "alpha_max", cfg.train.train.fusion.alpha_max);
            get(f, "ramp_steps", cfg.train.train.fusion.ramp_steps);
        }
        if (t.contains("scene")) parse_scene(t.at("scene"), "train.scene", cfg.train.scene);
    }
    if (j.contains("sample")) {
        const json& s = j.at("sample");
        check_keys(s, "sample",
                   {"checkpoint", "task", "count", "frames", "ode_steps", "alpha", "schedule",
                    "scene"});
        get(s, "checkpoint", cfg.sample.checkpoint);
        get(s, "task", cfg.sample.task);
        get(s, "count", cfg.sample.count);
        get(s, "frames", cfg.sample.frames);
        get(s, "ode_steps", cfg.sample.ode_steps);
        get(s, "alpha", cfg.sample.alpha);
        if (s.contains("schedule"))
            parse_schedule(s.at("schedule"), "sample.schedule", cfg.sample.schedule,
                           &cfg.sample.velocity_mode);
        if (s.contains("scene")) parse_scene(s.at("scene"), "sample.scene", cfg.sample.scene);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, "eval", {"checkpoint", "ode_steps", "alpha", "schedule", "scene"});
        get(e, "checkpoint", cfg.eval.checkpoint);
        get(e, "ode_steps", cfg.eval.ode_steps);
        get(e, "alpha", cfg.eval.alpha);
        if (e.contains("schedule"))
            parse_schedule(e.at("schedule"), "eval.schedule", cfg.eval.schedule,
                           &cfg.eval.velocity_mode);
        if (e.contains("scene")) parse_scene(e.at("scene"), "eval.scene", cfg.eval.scene);
    }
    if (j.contains("checks")) {
        const json& c = j.at("checks");
        check_keys(c, "checks", {"seed"});
        get(c, "seed", cfg.checks.seed);
    }
    return cfg;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    j["gen-data"] = json{{"num_samples", cfg.gen_data.num_samples},
                         {"workers", cfg.gen_data.workers},
                         {"gen", dump_gen(cfg.gen_data.gen)}};
    j["warp"] = json{{"data", cfg.warp.data}, {"frame", cfg.warp.frame}};
    j["train"] = json{{"task", cfg.train.task},
                      {"steps", cfg.train.train.steps},
                      {"batch_size", cfg.train.train.batch_size},
                      {"lr", cfg.train.train.lr},
                      {"momentum", cfg.train.train.momentum},
                      {"stage", cfg.train.train.stage},
                      {"zero_confidence", cfg.train.train.zero_confidence},
                      {"est_hidden", cfg.train.train.est_hidden},
                      {"net",
                       json{{"dim", cfg.train.train.net.dim},
                            {"blocks", cfg.train.train.net.blocks},
                            {"lambda", cfg.train.train.net.lambda}}},
                      {"schedule", dump_schedule(cfg.train.train.schedule,
                                                 to_string(cfg.train.train.velocity_mode))},
                      {"fusion",
                       json{{"alpha_max", cfg.train.train.fusion.alpha_max},
                            {"ramp_steps", cfg.train.train.fusion.ramp_steps}}},
                      {"scene", dump_scene(cfg.train.scene)}};
    j["sample"] = json{{"checkpoint", cfg.sample.checkpoint},
                       {"task", cfg.sample.task},
                       {"count", cfg.sample.count},
                       {"frames", cfg.sample.frames},
                       {"ode_steps", cfg.sample.ode_steps},
                       {"alpha", cfg.sample.alpha},
                       {"schedule", dump_schedule(cfg.sample.schedule, cfg.sample.velocity_mode)},
                       {"scene", dump_scene(cfg.sample.scene)}};
    j["eval"] = json{{"checkpoint", cfg.eval.checkpoint},
                     {"ode_steps", cfg.eval.ode_steps},
                     {"alpha", cfg.eval.alpha},
                     {"schedule", dump_schedule(cfg.eval.schedule, cfg.eval.velocity_mode)},
                     {"scene", dump_scene(cfg.eval.scene)}};
    j["checks"] = json{{"seed", cfg.checks.seed}};

    std::ofstream fs(path, std::ios::binary);
    if (!fs) throw IoError("config: cannot write " + path);
    fs << j.dump(2) << "\n";
    if (!fs) throw IoError("config: failed writing " + path);
}

}  // namespace warp4d
