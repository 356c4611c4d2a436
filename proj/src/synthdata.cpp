#include "warp4d/synthdata.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "warp4d/image_io.hpp"
#include "warp4d/rng.hpp"
#include "warp4d/serialize.hpp"

namespace warp4d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

std::string frame_name(const char* stem, int i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, i, ext);
    return buf;
}

Vec3 random_unit(Rng& rng) {
    for (;;) {
        const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double n = v.norm();
        if (n > 0.1) return v / n;
    }
}

KinematicChain random_chain(const GenConfig& cfg, Rng& rng) {
    KinematicChain chain;
    const int span = cfg.max_links - cfg.min_links + 1;
    const int n = cfg.min_links + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(span)));
    chain.links.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Link l;
        l.length = rng.uniform(0.22, 0.38);
        l.radius = rng.uniform(0.055, 0.095);
        l.axis = random_unit(rng);
        l.limit_lo = rng.uniform(-1.5, -0.5);
        l.limit_hi = rng.uniform(0.5, 1.5);
        l.color = {rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95)};
        chain.links.push_back(l);
    }
    // Rest direction roughly world-up (+z) with a small random lean.
    chain.base_pose.R = Mat3::rot_z(rng.uniform(-0.3, 0.3)) *
                        Mat3::rot_y(-std::numbers::pi / 2 + rng.uniform(-0.25, 0.25)) *
                        Mat3::rot_x(rng.uniform(-0.3, 0.3));
    chain.base_pose.t = {};
    chain.validate();
    return chain;
}

json pose_to_json(const Pose& p) {
    return {{"R", p.R.m}, {"t", std::array<double, 3>{p.t.x, p.t.y, p.t.z}}};
}

json chain_to_json(const KinematicChain& c) {
    json links = json::array();
    for (const Link& l : c.links)
        links.push_back({{"length", l.length},
                         {"radius", l.radius},
                         {"axis", std::array<double, 3>{l.axis.x, l.axis.y, l.axis.z}},
                         {"limits", std::array<double, 2>{l.limit_lo, l.limit_hi}},
                         {"color", std::array<double, 3>{l.color.x, l.color.y, l.color.z}}});
    return {{"links", links}, {"base_pose", pose_to_json(c.base_pose)}};
}

}  // namespace

void GenConfig::validate() const {
    if (n_frames < 1) throw DomainError("gen config: n_frames must be >= 1");
    if (height < 8 || width < 8) throw DomainError("gen config: frame size too small");
    if (min_links < 1 || max_links < min_links)
        throw DomainError("gen config: need 1 <= min_links <= max_links");
    if (step_fraction < 0.0 || step_fraction > 1.0)
        throw DomainError("gen config: step_fraction must lie in [0, 1]");
    if (focal_scale <= 0.0 || cam_distance_factor <= 0.0 || cam_b_distance_scale <= 0.0 ||
        bg_distance_factor <= 0.0)
        throw DomainError("gen config: scale factors must be positive");
}

SceneSample generate_sample(const GenConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng root(seed);
    Rng chain_rng = root.stream("chain");
    Rng cam_rng = root.stream("camera");
    const uint64_t motion_seed = root.stream("motion").next_u64();
    const uint64_t texture_seed = root.stream("texture").next_u64();

    SceneSample s;
    s.seed = seed;
    s.chain = random_chain(cfg, chain_rng);
    s.joint_traj = random_motion(s.chain, cfg.n_frames, cfg.step_fraction, motion_seed);

    double reach = 0.0;
    for (const Link& l : s.chain.links) reach += l.length;
    reach += s.chain.links.back().radius;

    const Vec3 target{0, 0, 0.42 * reach};
    const double az_a = deg2rad(cfg.cam_azimuth_deg) + cam_rng.uniform(-0.07, 0.07);
    const double az_b = az_a + deg2rad(cfg.cam_b_azimuth_offset_deg);
    const double el = deg2rad(cfg.cam_elevation_deg) + cam_rng.uniform(-0.05, 0.05);
    const double dist = cfg.cam_distance_factor * reach;
    const auto orbit = [&](double az, double d) {
        return target + Vec3{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                             std::sin(el)} *
                            d;
    };
    const double fx = cfg.focal_scale * cfg.width;
    const double cx = (cfg.width - 1) / 2.0, cy = (cfg.height - 1) / 2.0;
    const Vec3 up{0, 0, 1};
    s.cam_a = make_look_at_camera(orbit(az_a, dist), target, up, fx, fx, cx, cy);
    s.cam_b = make_look_at_camera(orbit(az_b, dist * cfg.cam_b_distance_scale), target, up,
                                  fx, fx, cx, cy);

    const double az_m = 0.5 * (az_a + az_b);
    const Vec3 m{std::cos(az_m), std::sin(az_m), 0};
    s.background.point = target - m * (cfg.bg_distance_factor * std::max(reach, 1.0));
    s.background.normal = m;
    s.background.tex_u = {-std::sin(az_m), std::cos(az_m), 0};
    s.background.tex_v = {0, 0, 1};
    s.background.texture_seed = texture_seed;

    const int f = cfg.n_frames, h = cfg.height, w = cfg.width;
    s.frames_a = Tensor::video(f, h, w, 3);
    s.frames_b = Tensor::video(f, h, w, 3);
    s.depths_a = Tensor({f, h, w});
    s.depths_b = Tensor({f, h, w});
    s.masks_a = Tensor({f, h, w});
    s.masks_b = Tensor({f, h, w});
    s.center_world.resize(static_cast<size_t>(f));

    const size_t frame_px = static_cast<size_t>(h) * w;
    for (int i = 0; i < f; ++i) {
        const std::vector<Pose> poses = forward_kinematics(s.chain, s.joint_traj[static_cast<size_t>(i)]);
        Vec3 center{};
        for (size_t k = 0; k < poses.size(); ++k)
            center += poses[k].apply({s.chain.links[k].length / 2, 0, 0});
        s.center_world[static_cast<size_t>(i)] = center / static_cast<double>(poses.size());

        const std::vector<CapsulePrim> prims =
            chain_capsules(s.chain, s.joint_traj[static_cast<size_t>(i)]);
        const RenderResult ra = render(prims, s.background, s.cam_a, h, w);
        const RenderResult rb = render(prims, s.background, s.cam_b, h, w);
        std::copy(ra.rgb.data(), ra.rgb.data() + frame_px * 3,
                  s.frames_a.data() + static_cast<size_t>(i) * frame_px * 3);
        std::copy(rb.rgb.data(), rb.rgb.data() + frame_px * 3,
                  s.frames_b.data() + static_cast<size_t>(i) * frame_px * 3);
        std::copy(ra.depth.data(), ra.depth.data() + frame_px,
                  s.depths_a.data() + static_cast<size_t>(i) * frame_px);
        std::copy(rb.depth.data(), rb.depth.data() + frame_px,
                  s.depths_b.data() + static_cast<size_t>(i) * frame_px);
        std::copy(ra.fg_mask.data(), ra.fg_mask.data() + frame_px,
                  s.masks_a.data() + static_cast<size_t>(i) * frame_px);
        std::copy(rb.fg_mask.data(), rb.fg_mask.data() + frame_px,
                  s.masks_b.data() + static_cast<size_t>(i) * frame_px);
    }

    char cap[64];
    std::snprintf(cap, sizeof(cap), "chain-%06llx on background-%06llx",
                  static_cast<unsigned long long>(seed & 0xFFFFFF),
                  static_cast<unsigned long long>(texture_seed & 0xFFFFFF));
    s.caption = cap;
    return s;
}

void write_sample(const std::string& sample_dir, const SceneSample& s) {
    const fs::path base(sample_dir);
    std::error_code ec;
    fs::create_directories(base / "view_a", ec);
    fs::create_directories(base / "view_b", ec);
    if (ec) throw IoError("write_sample: cannot create " + sample_dir);

    const auto write_view = [&](const fs::path& dir, const Tensor& frames,
                                const Tensor& depths, const Tensor& masks, const Camera& cam) {
        for (int i = 0; i < frames.dim(0); ++i) {
            write_png((dir / frame_name("frame", i, "png")).string(), frames.frame(i));
            write_zbuf((dir / frame_name("depth", i, "f32")).string(), depths.frame(i));
            write_png((dir / frame_name("mask", i, "png")).string(), masks.frame(i));
        }
        save_camera_json((dir / "camera.json").string(), cam);
    };
    write_view(base / "view_a", s.frames_a, s.depths_a, s.masks_a, s.cam_a);
    write_view(base / "view_b", s.frames_b, s.depths_b, s.masks_b, s.cam_b);

    json centers = json::array();
    for (const Vec3& c : s.center_world)
        centers.push_back(std::array<double, 3>{c.x, c.y, c.z});
    json meta = {
        {"seed", s.seed},
        {"caption", s.caption},
        {"n_frames", s.frames_a.dim(0)},
        {"height", s.frames_a.dim(1)},
        {"width", s.frames_a.dim(2)},
        {"center_world", centers},
        {"chain", chain_to_json(s.chain)},
        {"background",
         {{"point", std::array<double, 3>{s.background.point.x, s.background.point.y,
                                          s.background.point.z}},
          {"normal", std::array<double, 3>{s.background.normal.x, s.background.normal.y,
                                           s.background.normal.z}},
          {"texture_seed", s.background.texture_seed}}},
    };
    std::ofstream fsout(base / "meta.json", std::ios::trunc);
    if (!fsout) throw IoError("write_sample: cannot open meta.json in " + sample_dir);
    fsout << meta.dump(2) << "\n";
    if (!fsout) throw IoError("write_sample: short write to meta.json in " + sample_dir);
}

ViewData load_view(const std::string& view_dir) {
    const fs::path dir(view_dir);
    int count = 0;
    while (fs::exists(dir / frame_name("frame", count, "png"))) ++count;
    if (count == 0) throw IoError("load_view: no frames in " + view_dir);

    ViewData v;
    v.cam = load_camera_json((dir / "camera.json").string());
    for (int i = 0; i < count; ++i) {
        const Tensor rgb = read_png_rgb((dir / frame_name("frame", i, "png")).string());
        const Tensor depth = read_zbuf((dir / frame_name("depth", i, "f32")).string());
        const Tensor mask = read_png_gray((dir / frame_name("mask", i, "png")).string());
        if (i == 0) {
            v.frames = Tensor::video(count, rgb.dim(0), rgb.dim(1), 3);
            v.depths = Tensor({count, rgb.dim(0), rgb.dim(1)});
            v.masks = Tensor({count, rgb.dim(0), rgb.dim(1)});
        }
        if (rgb.dim(0) != v.frames.dim(1) || rgb.dim(1) != v.frames.dim(2) ||
            !depth.same_shape(Tensor({rgb.dim(0), rgb.dim(1)})) || !mask.same_shape(depth))
            throw DimensionError("load_view: inconsistent frame shapes in " + view_dir);
        const size_t px = static_cast<size_t>(rgb.dim(0)) * rgb.dim(1);
        std::copy(rgb.data(), rgb.data() + px * 3, v.frames.data() + static_cast<size_t>(i) * px * 3);
        std::copy(depth.data(), depth.data() + px, v.depths.data() + static_cast<size_t>(i) * px);
        for (size_t p = 0; p < px; ++p)
            v.masks.data()[static_cast<size_t>(i) * px + p] = mask[p] > 0.5 ? 1.0 : 0.0;
    }
    return v;
}

SampleMeta load_meta(const std::string& sample_dir) {
    const fs::path path = fs::path(sample_dir) / "meta.json";
    std::ifstream in(path);
    if (!in) throw IoError("load_meta: cannot open " + path.string());
    json j;
    try {
        in >> j;
        SampleMeta m;
        m.seed = j.at("seed").get<uint64_t>();
        m.caption = j.at("caption").get<std::string>();
        m.n_frames = j.at("n_frames").get<int>();
        for (const json& c : j.at("center_world")) {
            const auto a = c.get<std::array<double, 3>>();
            m.center_world.push_back({a[0], a[1], a[2]});
        }
        return m;
    } catch (const json::exception& e) {
        throw IoError("load_meta: " + path.string() + ": " + e.what());
    }
}

std::vector<std::string> generate_dataset(const GenConfig& cfg, const std::string& out_root,
                                          int num_samples, uint64_t master_seed, int workers) {
    cfg.validate();
    if (num_samples < 0) throw DomainError("generate_dataset: negative sample count");
    if (workers < 1) throw DomainError("generate_dataset: need at least one worker");
    std::error_code ec;
    fs::create_directories(out_root, ec);
    if (ec) throw IoError("generate_dataset: cannot create " + out_root);

    std::vector<std::string> dirs(static_cast<size_t>(num_samples));
    const Rng data_root = Rng(master_seed).stream("data");
    for (int i = 0; i < num_samples; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d", i);
        dirs[static_cast<size_t>(i)] = (fs::path(out_root) / name).string();
    }

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mu;
    const auto work = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= num_samples || failed.load()) return;
            try {
                const uint64_t seed = data_root.stream(static_cast<uint64_t>(i)).next_u64();
                write_sample(dirs[static_cast<size_t>(i)], generate_sample(cfg, seed));
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    if (failed.load()) throw IoError("generate_dataset: " + first_error);
    return dirs;
}

}  // namespace warp4d
