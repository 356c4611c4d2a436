// Acceptance suite: one pass/fail line per shipped guarantee, each with its
// pinned tolerance. Usage: acceptance <path-to-warp4d-binary>. The binary
// path is needed by the determinism criterion, which re-runs the CLI and
// byte-compares its outputs. Exits 0 only when every criterion passes.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "warp4d/attention.hpp"
#include "warp4d/camera.hpp"
#include "warp4d/config.hpp"
#include "warp4d/flowmatch.hpp"
#include "warp4d/render.hpp"
#include "warp4d/schedule.hpp"
#include "warp4d/synthdata.hpp"
#include "warp4d/warp.hpp"

namespace fs = std::filesystem;
using namespace warp4d;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", idx, name,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool bits_equal(double a, double b) {
    uint64_t ua, ub;
    std::memcpy(&ua, &a, 8);
    std::memcpy(&ub, &b, 8);
    return ua == ub;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Pinhole round trip: project(unproject(u, z)) == u to 1e-9 px over 1e6
//    random intrinsics/pixel/depth draws, under 5 s.
// ---------------------------------------------------------------------------
void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = Rng(101).stream("round-trip");
    double worst = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double fx = rng.uniform(40.0, 400.0);
        const double fy = rng.uniform(40.0, 400.0);
        const double cx = rng.uniform(20.0, 200.0);
        const double cy = rng.uniform(20.0, 200.0);
        const Camera cam = Camera::from_intrinsics(fx, fy, cx, cy);
        const double u = rng.uniform(0.0, 2.0 * cx);
        const double v = rng.uniform(0.0, 2.0 * cy);
        const double z = rng.uniform(0.05, 50.0);
        const Vec3 p = unproject(Pixel{{u, v}, z}, cam);
        const Vec2 back = project(p, cam);
        worst = std::max({worst, std::abs(back.x - u), std::abs(back.y - v)});
    }
    const double secs = seconds_since(t0);
    report(1, "pinhole project/unproject round trip", worst < 1e-9 && secs < 5.0,
           fmt("max deviation %.3g px over 1e6 draws (tol 1e-9), %.2f s (limit 5 s)", worst,
               secs));
}

// ---------------------------------------------------------------------------
// 2. Anchor tracking: noiseless anchors on 50 generated scenes land within
//    1e-6 px of the ground-truth projected center; under 1% multiplicative
//    depth noise the 5-frame consensus beats the single-frame estimate on
//    average over 100 noise seeds.
// ---------------------------------------------------------------------------
void criterion2() {
    GenConfig gen;
    gen.n_frames = 6;
    gen.height = 48;
    gen.width = 84;
    gen.min_links = 3;
    gen.max_links = 3;
    gen.step_fraction = 0.05;

    double worst_clean = 0.0;
    for (int i = 0; i < 50; ++i) {
        const SceneSample s = generate_sample(gen, 3000 + static_cast<uint64_t>(i));
        std::vector<Pixel> centers;
        for (const Vec3& cw : s.center_world) {
            const Vec3 pc = s.cam_a.world_to_camera(cw);
            centers.push_back({project(pc, s.cam_a), pc.z});
        }
        const AnchorResult res =
            anchor_track(centers, s.cam_a, s.cam_b, 5, 70000 + static_cast<uint64_t>(i));
        Vec3 mean{};
        for (int idx : res.sample_indices)
            mean = mean + s.cam_b.world_to_camera(s.center_world[static_cast<size_t>(idx)]);
        mean = mean * (1.0 / static_cast<double>(res.sample_indices.size()));
        const Vec2 gt = project(mean, s.cam_b);
        worst_clean =
            std::max(worst_clean, std::hypot(res.anchor2d.x - gt.x, res.anchor2d.y - gt.y));
    }

    GenConfig gen10 = gen;
    gen10.n_frames = 10;
    const SceneSample s = generate_sample(gen10, 3100);
    std::vector<Pixel> clean;
    for (const Vec3& cw : s.center_world) {
        const Vec3 pc = s.cam_a.world_to_camera(cw);
        clean.push_back({project(pc, s.cam_a), pc.z});
    }
    double err5 = 0.0, err1 = 0.0;
    for (int t = 0; t < 100; ++t) {
        Rng noise = Rng(9000 + static_cast<uint64_t>(t)).stream("depth-noise");
        std::vector<Pixel> noisy = clean;
        for (Pixel& p : noisy) p.z *= 1.0 + 0.01 * noise.normal();
        const uint64_t pick_seed = 80000 + static_cast<uint64_t>(t);
        for (int k : {5, 1}) {
            const AnchorResult got = anchor_track(noisy, s.cam_a, s.cam_b, k, pick_seed);
            const AnchorResult ref = anchor_track(clean, s.cam_a, s.cam_b, k, pick_seed);
            const double e = std::hypot(got.anchor2d.x - ref.anchor2d.x,
                                        got.anchor2d.y - ref.anchor2d.y);
            (k == 5 ? err5 : err1) += e;
        }
    }
    err5 /= 100.0;
    err1 /= 100.0;

    report(2, "multi-frame anchor tracking", worst_clean < 1e-6 && err5 < err1,
           fmt("noiseless max error %.3g px over 50 scenes (tol 1e-6); 1%% depth noise: "
               "mean error %.4f px with 5-frame consensus vs %.4f px single frame over 100 "
               "seeds (must be strictly lower)",
               worst_clean, err5, err1));
}

// ---------------------------------------------------------------------------
// 3. Warp oracle: on 20 generated two-view pairs the splatted view matches
//    the rendered target with MAE < 0.02 on the eroded occupancy interior,
//    and occupancy agrees with the renderer's cross-view visibility oracle
//    on at least 99% of pixels; under 60 s.
// ---------------------------------------------------------------------------
void criterion3() {
    const auto t0 = std::chrono::steady_clock::now();
    GenConfig gen = small_scene_gen();
    gen.n_frames = 4;
    // Pulled-back second camera: dense forward-splat coverage of the target
    // frame so occupancy gaps do not dominate the visibility comparison.
    gen.cam_b_distance_scale = 1.4;

    double worst_mae = 0.0, worst_agree = 1.0;
    int pairs = 0;
    for (int i = 0; i < 5; ++i) {
        const SceneSample s = generate_sample(gen, 4000 + static_cast<uint64_t>(i));
        for (int f = 0; f < gen.n_frames; ++f) {
            const PointCloud cloud =
                depth_to_pointcloud(s.frames_a.frame(f), s.depths_a.frame(f), s.cam_a);
            const WarpedFrame wf = forward_warp(cloud, s.cam_b, gen.height, gen.width);
            const Tensor interior = erode(wf.m_geo, 1);
            const Tensor frame_b = s.frames_b.frame(f);
            double err = 0.0;
            int n = 0;
            for (int y = 0; y < gen.height; ++y)
                for (int x = 0; x < gen.width; ++x) {
                    if (interior.at(y, x) != 1.0) continue;
                    for (int c = 0; c < 3; ++c) {
                        err += std::abs(wf.rgb.at(y, x, c) - frame_b.at(y, x, c));
                        ++n;
                    }
                }
            worst_mae = std::max(worst_mae, err / static_cast<double>(n));

            const Tensor vis = cross_view_visibility(s.depths_b.frame(f), s.cam_b,
                                                     s.depths_a.frame(f), s.cam_a, 0.01);
            double agree = 0.0;
            for (size_t k = 0; k < vis.size(); ++k)
                agree += vis[k] == wf.m_geo[k] ? 1.0 : 0.0;
            worst_agree = std::min(worst_agree, agree / static_cast<double>(vis.size()));
            ++pairs;
        }
    }
    const double secs = seconds_since(t0);
    report(3, "forward-warp vs rendered target", worst_mae < 0.02 && worst_agree >= 0.99 &&
               secs < 60.0 && pairs == 20,
           fmt("%d pairs: worst eroded-interior MAE %.4f (tol 0.02), worst visibility "
               "agreement %.4f (floor 0.99), %.1f s (limit 60 s)",
               pairs, worst_mae, worst_agree, secs));
}

// ---------------------------------------------------------------------------
// 4. Schedule reduction: with confidence 0 and sigma_low 1 the spatial
//    schedule collapses to the uniform interpolation and constant velocity,
//    bit for bit; the schedule-consistent velocity matches the finite
//    difference of the flow state within 1e-6.
// ---------------------------------------------------------------------------
void criterion4() {
    const NoiseScheduleConfig sched;  // sigma_low = 1.0, sigma_high = 0.85
    const int s = 7, ch = 3;
    Rng rng(404);
    Tensor x0({s, ch}), x1({s, ch}), c0({s});
    for (size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
    for (size_t i = 0; i < x1.size(); ++i) x1[i] = rng.normal();

    std::vector<double> ts{0.0, 0.1237, 0.5, 0.75, 1.0};
    for (int i = 0; i < 20; ++i) ts.push_back(rng.uniform());
    int64_t checked = 0;
    bool exact = true;
    for (double t : ts) {
        const Tensor sig = sigma_map(c0, t, sched);
        const Tensor xt = flow_state(x0, x1, sig);
        for (size_t i = 0; i < xt.size(); ++i) {
            const double want = t * x1[i] + (1.0 - t) * x0[i];
            exact = exact && bits_equal(xt[i], want);
            ++checked;
        }
    }
    const Tensor v = velocity_target(x0, x1, c0, sched, VelocityMode::Plain);
    for (size_t i = 0; i < v.size(); ++i) {
        exact = exact && bits_equal(v[i], x1[i] - x0[i]);
        ++checked;
    }

    Tensor c({s});
    for (size_t i = 0; i < c.size(); ++i) c[i] = rng.uniform();
    const Tensor v_sc = velocity_target(x0, x1, c, sched, VelocityMode::ScheduleConsistent);
    double worst_fd = 0.0;
    std::vector<double> interior{0.3, 0.62};
    for (int i = 0; i < 10; ++i) interior.push_back(rng.uniform(0.05, 0.95));
    const double eps = 1e-6;
    for (double t : interior) {
        const Tensor up = flow_state(x0, x1, sigma_map(c, t + eps, sched));
        const Tensor dn = flow_state(x0, x1, sigma_map(c, t - eps, sched));
        for (size_t i = 0; i < up.size(); ++i)
            worst_fd = std::max(worst_fd, std::abs((up[i] - dn[i]) / (2.0 * eps) - v_sc[i]));
    }

    report(4, "confidence schedule reduction", exact && worst_fd < 1e-6,
           fmt("uniform limit bit-exact on %lld values; schedule-consistent velocity vs "
               "finite-difference d(x_t)/dt max deviation %.3g (tol 1e-6)",
               static_cast<long long>(checked), worst_fd));
}

// ---------------------------------------------------------------------------
// 5. Attention oracles: both paths vs an independent unstabilized softmax on
//    1000 random instances (1e-6); boost lambda = 1e4 equals attention
//    restricted to flagged keys (1e-3); an all-ones mask changes nothing
//    (1e-6); rows are convex weights (1e-6).
// ---------------------------------------------------------------------------
Tensor naive_attention(const AttentionInputs& inp, const std::vector<double>* fg,
                       double lambda) {
    const int lq = inp.Q.dim(0), lk = inp.K.dim(0), d = inp.Q.dim(1), dv = inp.V.dim(1);
    Tensor out({lq, dv});
    for (int i = 0; i < lq; ++i) {
        std::vector<double> w(static_cast<size_t>(lk));
        double sum = 0.0;
        for (int j = 0; j < lk; ++j) {
            double t = 0.0;
            for (int k = 0; k < d; ++k) t += inp.Q.at(i, k) * inp.K.at(j, k);
            t /= std::sqrt(static_cast<double>(d));
            if (fg) t += lambda * (*fg)[static_cast<size_t>(j)];
            w[static_cast<size_t>(j)] = std::exp(t);
            sum += w[static_cast<size_t>(j)];
        }
        for (int vcol = 0; vcol < dv; ++vcol) {
            double acc = 0.0;
            for (int j = 0; j < lk; ++j)
                acc += w[static_cast<size_t>(j)] * inp.V.at(j, vcol);
            out.at(i, vcol) = acc / sum;
        }
    }
    return out;
}

void criterion5() {
    Rng rng(505);
    double dev_paths = 0.0, dev_restricted = 0.0, dev_shift = 0.0, dev_rowsum = 0.0;
    const int n = 1000;
    for (int it = 0; it < n; ++it) {
        const int lq = 1 + static_cast<int>(rng.uniform_int(6));
        const int lk = 1 + static_cast<int>(rng.uniform_int(6));
        const int d = 1 + static_cast<int>(rng.uniform_int(8));
        const int dv = 1 + static_cast<int>(rng.uniform_int(8));
        AttentionInputs inp;
        inp.Q = Tensor({lq, d});
        inp.K = Tensor({lk, d});
        inp.V = Tensor({lk, dv});
        for (size_t i = 0; i < inp.Q.size(); ++i) inp.Q[i] = rng.normal();
        for (size_t i = 0; i < inp.K.size(); ++i) inp.K[i] = rng.normal();
        for (size_t i = 0; i < inp.V.size(); ++i) inp.V[i] = rng.normal();
        std::vector<double> fg(static_cast<size_t>(lk));
        bool any_fg = false;
        for (double& f : fg) {
            f = rng.uniform() < 0.5 ? 1.0 : 0.0;
            any_fg = any_fg || f == 1.0;
        }
        const double lambda = rng.uniform(0.0, 3.0);

        const Tensor og = global_attention(inp);
        const Tensor od = guided_attention(inp, boost_bias(fg, lambda));
        const Tensor ng = naive_attention(inp, nullptr, 0.0);
        const Tensor nd = naive_attention(inp, &fg, lambda);
        for (size_t i = 0; i < og.size(); ++i) {
            dev_paths = std::max(dev_paths, std::abs(og[i] - ng[i]));
            dev_paths = std::max(dev_paths, std::abs(od[i] - nd[i]));
        }

        const Tensor shifted =
            guided_attention(inp, boost_bias(std::vector<double>(fg.size(), 1.0), 3.0));
        for (size_t i = 0; i < og.size(); ++i)
            dev_shift = std::max(dev_shift, std::abs(shifted[i] - og[i]));

        AttentionInputs ones = inp;
        ones.V = Tensor({lk, 1});
        for (size_t i = 0; i < ones.V.size(); ++i) ones.V[i] = 1.0;
        const Tensor rs_g = global_attention(ones);
        const Tensor rs_d = guided_attention(ones, boost_bias(fg, lambda));
        for (size_t i = 0; i < rs_g.size(); ++i) {
            dev_rowsum = std::max(dev_rowsum, std::abs(rs_g[i] - 1.0));
            dev_rowsum = std::max(dev_rowsum, std::abs(rs_d[i] - 1.0));
        }

        if (any_fg) {
            const Tensor limit = guided_attention(inp, boost_bias(fg, 1e4));
            int nf = 0;
            for (double f : fg) nf += f == 1.0 ? 1 : 0;
            AttentionInputs sub;
            sub.Q = inp.Q;
            sub.K = Tensor({nf, d});
            sub.V = Tensor({nf, dv});
            int r = 0;
            for (int j = 0; j < lk; ++j) {
                if (fg[static_cast<size_t>(j)] != 1.0) continue;
                for (int k = 0; k < d; ++k) sub.K.at(r, k) = inp.K.at(j, k);
                for (int k = 0; k < dv; ++k) sub.V.at(r, k) = inp.V.at(j, k);
                ++r;
            }
            const Tensor restricted = global_attention(sub);
            for (size_t i = 0; i < limit.size(); ++i)
                dev_restricted = std::max(dev_restricted, std::abs(limit[i] - restricted[i]));
        }
    }
    report(5, "attention path oracles",
           dev_paths < 1e-6 && dev_restricted < 1e-3 && dev_shift < 1e-6 && dev_rowsum < 1e-6,
           fmt("%d instances: paths vs brute force %.3g (tol 1e-6); boost 1e4 vs restricted "
               "%.3g (tol 1e-3); constant-bias shift %.3g (tol 1e-6); row sums %.3g (tol 1e-6)",
               n, dev_paths, dev_restricted, dev_shift, dev_rowsum));
}

// ---------------------------------------------------------------------------
// 6. Gradient suite: central finite differences over every trainable
//    parameter of the velocity network (tol 1e-3 relative) and the
//    standalone confidence estimator (tol 1e-4), under 2 min.
// ---------------------------------------------------------------------------
void criterion6() {
    const auto t0 = std::chrono::steady_clock::now();
    const GradCheckReport rep = grad_check(1);
    const double secs = seconds_since(t0);
    report(6, "finite-difference gradient suite",
           rep.pass() && rep.n_net > 0 && rep.n_est > 0 && secs < 120.0,
           fmt("net max relative deviation %.3g over %zu parameters (tol %g); estimator %.3g "
               "over %zu parameters (tol %g); %.1f s (limit 120 s)",
               rep.max_rel_net, rep.n_net, rep.tol_net, rep.max_rel_est, rep.n_est,
               rep.tol_est, secs));
}

// ---------------------------------------------------------------------------
// 7. Toy flow matching: 5k single-thread steps on the two-Gaussian mixture
//    reach an FM loss below 30% of the zero-net baseline in under 5 min, and
//    10k ODE samples land the mixture weights within +/-0.05.
// ---------------------------------------------------------------------------
void criterion7() {
    TrainConfig tc;
    tc.steps = 5000;
    tc.batch_size = 16;
    tc.lr = 0.02;
    tc.momentum = 0.9;
    tc.seed = 3;
    tc.net.channels = 2;
    tc.net.dim = 16;
    tc.net.blocks = 2;
    const ToySpec spec;

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(tc, make_toy_source(spec));
    const double train_secs = seconds_since(t0);

    double tail = 0.0;
    const size_t tail_n = 500;
    for (size_t i = r.curve.size() - tail_n; i < r.curve.size(); ++i) tail += r.curve[i].fm;
    tail /= static_cast<double>(tail_n);

    Rng brng = Rng(424242).stream("baseline");
    double base = 0.0;
    const int nb = 20000;
    for (int i = 0; i < nb; ++i) {
        FlowElem e = make_toy_elem(spec, tc.schedule, tc.velocity_mode, brng);
        base += (e.v_target[0] * e.v_target[0] + e.v_target[1] * e.v_target[1]) / 2.0;
    }
    base /= static_cast<double>(nb);
    const double ratio = tail / base;

    const Tensor pts =
        sample_toy_points(r.net, spec, 10000, 50, tc.schedule, tc.velocity_mode, 2);
    const std::array<double, 2> w = toy_mode_weights(pts);
    const double dev_w = std::max(std::abs(w[0] - 0.7), std::abs(w[1] - 0.3));

    report(7, "toy flow matching",
           ratio < 0.30 && dev_w <= 0.05 && train_secs < 300.0,
           fmt("final FM loss %.3f = %.1f%% of zero-net baseline %.3f (limit 30%%); 10k-sample "
               "mode weights %.4f/%.4f vs 0.7/0.3, max deviation %.4f (tol 0.05); training "
               "%.1f s single thread (limit 300 s)",
               tail, 100.0 * ratio, base, w[0], w[1], dev_w, train_secs));
}

// ---------------------------------------------------------------------------
// 8. Ablation ordering: on the two-view inpainting task with matched seeds
//    and steps, the full model's masked-region MSE is no worse than the
//    no-noise-injection and no-interaction-attention ablations for a
//    majority of 3 seeds.
// ---------------------------------------------------------------------------
void criterion8() {
    const GenConfig gen = small_scene_gen();
    const SceneTokenConfig tok;
    const std::vector<FlowElem> train_pool = build_scene_pool(gen, tok, 4, 9000);
    const std::vector<FlowElem> eval_pool = build_scene_pool(gen, tok, 2, 7700);
    std::vector<FlowElem> eval_zeroc = eval_pool;
    for (FlowElem& e : eval_zeroc)
        for (size_t i = 0; i < e.c.size(); ++i) e.c[i] = 0.0;

    const double alpha_max = 0.15;
    int wins_zeroc = 0, wins_noattn = 0;
    std::string rows;
    for (uint64_t seed : {101ull, 202ull, 303ull}) {
        TrainConfig base;
        base.steps = 800;
        base.batch_size = 4;
        base.lr = 0.05;
        base.momentum = 0.9;
        base.seed = seed;
        base.net.channels = 3;
        base.net.lambda = 4.0;
        base.fusion = {alpha_max, 200};

        TrainConfig cfg_zeroc = base;
        cfg_zeroc.zero_confidence = true;  // w/o confidence-scheduled noise injection
        TrainConfig cfg_noattn = base;
        cfg_noattn.fusion = {0.0, 200};  // w/o interaction-guided attention

        const BatchSource src = make_scene_source(train_pool);
        const TrainResult full = train(base, src);
        const TrainResult zeroc = train(cfg_zeroc, src);
        const TrainResult noattn = train(cfg_noattn, src);

        const EvalResult ef = evaluate(full.net, eval_pool, base.schedule, base.velocity_mode,
                                       alpha_max, 40, 5);
        const EvalResult ez = evaluate(zeroc.net, eval_zeroc, base.schedule,
                                       base.velocity_mode, alpha_max, 40, 5);
        const EvalResult en = evaluate(noattn.net, eval_pool, base.schedule,
                                       base.velocity_mode, 0.0, 40, 5);
        if (ef.mse_holes <= ez.mse_holes) ++wins_zeroc;
        if (ef.mse_holes <= en.mse_holes) ++wins_noattn;
        rows += fmt(" seed %llu: %.5f/%.5f/%.5f;", static_cast<unsigned long long>(seed),
                    ef.mse_holes, ez.mse_holes, en.mse_holes);
    }
    report(8, "ablation ordering on two-view inpainting",
           wins_zeroc >= 2 && wins_noattn >= 2,
           fmt("hole MSE full/no-noise-injection/no-interaction-attention per seed:%s full "
               "<= ablation on %d/3 and %d/3 seeds (majority required)",
               rows.c_str(), wins_zeroc, wins_noattn));
}

// ---------------------------------------------------------------------------
// 9. Determinism: repeated CLI runs of gen-data, train, and sample are
//    byte-identical, and parallel gen-data matches the serial tree.
// ---------------------------------------------------------------------------
int run_cli(const std::string& cli, const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out[fs::relative(entry.path(), root).string()] = read_bytes(entry.path());
    return out;
}

void criterion9(const std::string& cli) {
    const fs::path tmp =
        fs::temp_directory_path() / ("warp4d_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    const auto file = [&](const char* name) { return (tmp / name).string(); };

    bool ok = true;
    std::string detail;

    std::ofstream(file("gen.json"))
        << R"({"gen-data": {"num_samples": 2, "workers": 1,
              "gen": {"n_frames": 2, "height": 48, "width": 84,
                       "min_links": 3, "max_links": 3, "step_fraction": 0.05}}})";
    for (const char* run : {"g1", "g2"})
        ok = ok && run_cli(cli, "gen-data --config '" + file("gen.json") + "' --seed 11 --out '" +
                                    (tmp / run).string() + "'") == 0;
    ok = ok && run_cli(cli, "gen-data --config '" + file("gen.json") +
                                "' --seed 11 --workers 2 --out '" + (tmp / "g3").string() +
                                "'") == 0;
    if (ok) {
        const auto t1 = tree_bytes(tmp / "g1" / "dataset");
        const bool rerun_same = t1 == tree_bytes(tmp / "g2" / "dataset");
        const bool parallel_same = t1 == tree_bytes(tmp / "g3" / "dataset");
        ok = rerun_same && parallel_same;
        detail += fmt("gen-data rerun %s, 2-worker run %s serial (%zu files)",
                      rerun_same ? "identical" : "DIFFERS",
                      parallel_same ? "matches" : "DIFFERS FROM", t1.size());
    } else {
        detail += "gen-data invocation failed";
    }

    std::ofstream(file("train.json"))
        << R"({"train": {"batch_size": 4, "net": {"dim": 4, "blocks": 1}},
               "sample": {"count": 300, "ode_steps": 8}})";
    for (const char* run : {"t1", "t2"})
        ok = ok && run_cli(cli, "train --task toy --steps 60 --config '" + file("train.json") +
                                    "' --seed 5 --out '" + (tmp / run).string() + "'") == 0;
    if (ok) {
        const bool ckpt_same =
            read_bytes(tmp / "t1" / "checkpoint.bin") == read_bytes(tmp / "t2" / "checkpoint.bin");
        const bool curve_same =
            read_bytes(tmp / "t1" / "loss.csv") == read_bytes(tmp / "t2" / "loss.csv");
        ok = ckpt_same && curve_same;
        detail += fmt("; train rerun checkpoint %s, loss curve %s",
                      ckpt_same ? "identical" : "DIFFERS", curve_same ? "identical" : "DIFFERS");
    } else {
        detail += "; train invocation failed";
    }

    for (const char* run : {"s1", "s2"})
        ok = ok && run_cli(cli, "sample --task toy --checkpoint '" +
                                    (tmp / "t1" / "checkpoint.bin").string() + "' --config '" +
                                    file("train.json") + "' --seed 6 --out '" +
                                    (tmp / run).string() + "'") == 0;
    if (ok) {
        const bool csv_same =
            read_bytes(tmp / "s1" / "samples.csv") == read_bytes(tmp / "s2" / "samples.csv");
        ok = csv_same;
        detail += fmt("; sample rerun %s", csv_same ? "identical" : "DIFFERS");
    } else {
        detail += "; sample invocation failed";
    }

    fs::remove_all(tmp);
    report(9, "byte-level determinism of the CLI", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <path-to-warp4d-binary>\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];

    struct Entry {
        int idx;
        const char* name;
        void (*fn)();
    };
    const Entry entries[] = {
        {1, "pinhole project/unproject round trip", &criterion1},
        {2, "multi-frame anchor tracking", &criterion2},
        {3, "forward-warp vs rendered target", &criterion3},
        {4, "confidence schedule reduction", &criterion4},
        {5, "attention path oracles", &criterion5},
        {6, "finite-difference gradient suite", &criterion6},
        {7, "toy flow matching", &criterion7},
        {8, "ablation ordering on two-view inpainting", &criterion8},
    };
    for (const Entry& e : entries) {
        try {
            e.fn();
        } catch (const std::exception& ex) {
            report(e.idx, e.name, false, std::string("exception: ") + ex.what());
        }
    }
    try {
        criterion9(cli);
    } catch (const std::exception& ex) {
        report(9, "byte-level determinism of the CLI", false,
               std::string("exception: ") + ex.what());
    }

    if (g_failures == 0) {
        std::printf("acceptance: all 9 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return 1;
}
