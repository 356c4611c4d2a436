// Command-line front end: one binary exposing data generation, warping,
// training, sampling, evaluation, and the oracle/gradient check suites.
// Exit codes: 0 success, 1 validation/usage error, 2 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "warp4d/config.hpp"
#include "warp4d/flowmatch.hpp"
#include "warp4d/image_io.hpp"
#include "warp4d/log.hpp"
#include "warp4d/metrics.hpp"
#include "warp4d/warp.hpp"

namespace fs = std::filesystem;
using namespace warp4d;

namespace {

std::string frame_name(const char* stem, int idx, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, idx, ext);
    return buf;
}

void prepare_out(RunConfig& rc) {
    if (rc.out.empty()) throw DomainError("an output directory is required (--out)");
    fs::create_directories(rc.out);
    save_run_config((fs::path(rc.out) / "config.json").string(), rc);
}

SceneSample scene_from_dir(const std::string& dir) {
    const ViewData a = load_view((fs::path(dir) / "view_a").string());
    const ViewData b = load_view((fs::path(dir) / "view_b").string());
    SceneSample s;
    s.frames_a = a.frames;
    s.depths_a = a.depths;
    s.masks_a = a.masks;
    s.cam_a = a.cam;
    s.frames_b = b.frames;
    s.depths_b = b.depths;
    s.masks_b = b.masks;
    s.cam_b = b.cam;
    const SampleMeta meta = load_meta(dir);
    s.seed = meta.seed;
    s.caption = meta.caption;
    s.center_world = meta.center_world;
    return s;
}

std::vector<FlowElem> pool_from_dataset(const std::string& data_dir,
                                        const SceneTokenConfig& tok) {
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(data_dir))
        if (entry.is_directory() && entry.path().filename().string().rfind("sample_", 0) == 0)
            dirs.push_back(entry.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw IoError("no sample_* directories under " + data_dir);
    std::vector<FlowElem> pool;
    for (const std::string& d : dirs) {
        const SceneSample s = scene_from_dir(d);
        for (int f = 0; f < s.frames_a.dim(0); ++f)
            pool.push_back(scene_frame_elem(s, f, tok));
    }
    return pool;
}

int cmd_gen_data(RunConfig& rc) {
    prepare_out(rc);
    const std::string root = (fs::path(rc.out) / "dataset").string();
    const std::vector<std::string> dirs = generate_dataset(
        rc.gen_data.gen, root, rc.gen_data.num_samples, rc.seed, rc.gen_data.workers);
    log_info("gen-data: wrote " + std::to_string(dirs.size()) + " samples under " + root);
    std::printf("gen-data: %d samples -> %s\n", static_cast<int>(dirs.size()), root.c_str());
    return 0;
}

int cmd_warp(RunConfig& rc) {
    if (rc.warp.data.empty()) throw DomainError("warp: --data <sample_dir> is required");
    prepare_out(rc);
    const SceneSample s = scene_from_dir(rc.warp.data);
    const fs::path out = fs::path(rc.out) / "warp";
    fs::create_directories(out);
    const int n = s.frames_a.dim(0);
    const int first = rc.warp.frame >= 0 ? rc.warp.frame : 0;
    const int last = rc.warp.frame >= 0 ? rc.warp.frame : n - 1;
    if (first >= n) throw DomainError("warp: frame index out of range");
    double mae_sum = 0.0, cov_sum = 0.0;
    int64_t dropped = 0;
    int counted = 0;
    for (int f = first; f <= last; ++f) {
        const Tensor rgb = s.frames_a.frame(f);
        const Tensor depth = s.depths_a.frame(f);
        const WarpedFrame wf =
            forward_warp(depth_to_pointcloud(rgb, depth, s.cam_a), s.cam_b,
                         rgb.dim(0), rgb.dim(1));
        write_png((out / frame_name("frame", f, "png")).string(), wf.rgb);
        write_png((out / frame_name("m_geo", f, "png")).string(), wf.m_geo);
        Tensor zb = wf.zbuf;
        write_zbuf((out / frame_name("zbuf", f, "f32")).string(), zb);
        dropped += wf.dropped_behind_camera;

        const Tensor target = s.frames_b.frame(f);
        const Tensor inner = erode(wf.m_geo, 1);
        double mae = 0.0;
        int64_t hits = 0;
        for (int y = 0; y < inner.dim(0); ++y)
            for (int x = 0; x < inner.dim(1); ++x) {
                if (inner.at(y, x) < 0.5) continue;
                for (int ch = 0; ch < 3; ++ch)
                    mae += std::abs(wf.rgb.at(y, x, ch) - target.at(y, x, ch));
                hits += 3;
            }
        if (hits > 0) {
            mae_sum += mae / static_cast<double>(hits);
            ++counted;
        }
        double cov = 0.0;
        for (size_t i = 0; i < wf.m_geo.size(); ++i) cov += wf.m_geo[i];
        cov_sum += cov / static_cast<double>(wf.m_geo.size());
    }
    const int n_frames = last - first + 1;
    nlohmann::json summary{{"frames", n_frames},
                           {"mean_abs_error_eroded", counted ? mae_sum / counted : 0.0},
                           {"mean_coverage", cov_sum / n_frames},
                           {"points_dropped_behind_camera", dropped}};
    std::ofstream(out / "summary.json") << summary.dump(2) << "\n";
    std::printf("warp: %d frames, eroded-mask MAE %.5f, coverage %.3f\n", n_frames,
                counted ? mae_sum / counted : 0.0, cov_sum / n_frames);
    return 0;
}

int cmd_train(RunConfig& rc, const std::string& data_dir) {
    prepare_out(rc);
    TrainConfig tc = rc.train.train;
    tc.seed = rc.seed;
    BatchSource source;
    if (rc.train.task == "toy") {
        tc.net.channels = 2;
        source = make_toy_source(ToySpec{});
    } else if (rc.train.task == "scene") {
        tc.net.channels = 3;
        std::vector<FlowElem> pool =
            data_dir.empty()
                ? build_scene_pool(rc.train.scene.gen, rc.train.scene.tokens,
                                   rc.train.scene.samples, rc.train.scene.pool_seed)
                : pool_from_dataset(data_dir, rc.train.scene.tokens);
        log_info("train: scene pool holds " + std::to_string(pool.size()) + " frame pairs");
        source = make_scene_source(std::move(pool));
    } else {
        throw DomainError("train: task must be 'toy' or 'scene'");
    }
    const TrainResult result = train(tc, source);
    write_loss_csv((fs::path(rc.out) / "loss.csv").string(), result.curve);
    save_model((fs::path(rc.out) / "checkpoint.bin").string(), result.net, result.est);
    const LossRow& lastRow = result.curve.back();
    std::printf("train: %lld steps, final fm=%.6f aux=%.6f alpha=%.3f -> %s\n",
                static_cast<long long>(tc.steps), lastRow.fm, lastRow.aux, lastRow.alpha,
                (fs::path(rc.out) / "checkpoint.bin").string().c_str());
    return 0;
}

int cmd_sample(RunConfig& rc) {
    if (rc.sample.checkpoint.empty())
        throw DomainError("sample: --checkpoint is required");
    prepare_out(rc);
    const ModelBundle model = load_model(rc.sample.checkpoint);
    const VelocityMode mode = velocity_mode_from_string(rc.sample.velocity_mode);
    if (rc.sample.task == "toy") {
        const ToySpec spec;
        const Tensor pts = sample_toy_points(model.net, spec, rc.sample.count,
                                             rc.sample.ode_steps, rc.sample.schedule, mode,
                                             rc.seed);
        std::FILE* fp = std::fopen((fs::path(rc.out) / "samples.csv").string().c_str(), "wb");
        if (!fp) throw IoError("sample: cannot write samples.csv");
        std::fprintf(fp, "x,y\n");
        for (int i = 0; i < pts.dim(0); ++i)
            std::fprintf(fp, "%.17g,%.17g\n", pts.at(i, 0), pts.at(i, 1));
        std::fclose(fp);
        const std::array<double, 2> w = toy_mode_weights(pts);
        nlohmann::json wj{{"w_neg", w[0]}, {"w_pos", w[1]}};
        std::ofstream(fs::path(rc.out) / "weights.json") << wj.dump(2) << "\n";
        std::printf("sample: %d points, mode weights %.4f / %.4f\n", pts.dim(0), w[0], w[1]);
        return 0;
    }
    if (rc.sample.task != "scene") throw DomainError("sample: task must be 'toy' or 'scene'");
    std::vector<FlowElem> pool =
        build_scene_pool(rc.sample.scene.gen, rc.sample.scene.tokens, rc.sample.scene.samples,
                         rc.sample.scene.pool_seed);
    const int n = std::min<int>(rc.sample.frames, static_cast<int>(pool.size()));
    const Rng root = Rng(rc.seed).stream("sample");
    for (int i = 0; i < n; ++i) {
        const FlowElem& e = pool[static_cast<size_t>(i)];
        Rng rng = root.stream(static_cast<uint64_t>(i));
        Tensor x0({e.lat_h * e.lat_w, model.net.cfg.channels});
        for (size_t k = 0; k < x0.size(); ++k) x0[k] = rng.normal();
        const Tensor gen = generate_element(model.net, e, x0, rc.sample.schedule, mode,
                                            rc.sample.alpha, rc.sample.ode_steps);
        Tensor img({e.lat_h, e.lat_w, model.net.cfg.channels});
        for (size_t k = 0; k < img.size(); ++k) img[k] = std::clamp(gen[k], 0.0, 1.0);
        write_png((fs::path(rc.out) / frame_name("gen", i, "png")).string(), img);
        Tensor gt({e.lat_h, e.lat_w, model.net.cfg.channels});
        for (size_t k = 0; k < gt.size(); ++k) gt[k] = e.x1[k];
        write_png((fs::path(rc.out) / frame_name("gt", i, "png")).string(), gt);
        write_png((fs::path(rc.out) / frame_name("warp", i, "png")).string(), e.z_warp_lat);
    }
    std::printf("sample: wrote %d latent frames under %s\n", n, rc.out.c_str());
    return 0;
}

int cmd_eval(RunConfig& rc) {
    if (rc.eval.checkpoint.empty()) throw DomainError("eval: --checkpoint is required");
    prepare_out(rc);
    const ModelBundle model = load_model(rc.eval.checkpoint);
    const VelocityMode mode = velocity_mode_from_string(rc.eval.velocity_mode);
    const std::vector<FlowElem> pool =
        build_scene_pool(rc.eval.scene.gen, rc.eval.scene.tokens, rc.eval.scene.samples,
                         rc.eval.scene.pool_seed);
    const EvalResult res = evaluate(model.net, pool, rc.eval.schedule, mode, rc.eval.alpha,
                                    rc.eval.ode_steps, rc.seed);
    nlohmann::json mj{{"psnr", res.psnr},
                      {"ssim", res.ssim},
                      {"mse_holes", res.mse_holes},
                      {"mse_covered", res.mse_covered},
                      {"n_holes", res.n_holes},
                      {"n_covered", res.n_covered},
                      {"n_elems", res.n_elems}};
    std::ofstream(fs::path(rc.out) / "metrics.json") << mj.dump(2) << "\n";
    std::printf("eval: psnr=%.4f ssim=%.4f mse_holes=%.6f mse_covered=%.6f (%d elems)\n",
                res.psnr, res.ssim, res.mse_holes, res.mse_covered, res.n_elems);
    return 0;
}

// Independent naive attention (unstabilized softmax, two loops) used as the
// oracle for attn-check.
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const std::vector<double>& fg, double lambda) {
    const int lq = q.dim(0), lk = k.dim(0), d = q.dim(1), dv = v.dim(1);
    Tensor out({lq, dv});
    for (int i = 0; i < lq; ++i) {
        std::vector<double> w(static_cast<size_t>(lk));
        double sum = 0.0;
        for (int j = 0; j < lk; ++j) {
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += q.at(i, t) * k.at(j, t);
            s /= std::sqrt(static_cast<double>(d));
            if (!fg.empty()) s += lambda * fg[static_cast<size_t>(j)];
            w[static_cast<size_t>(j)] = std::exp(s);
            sum += w[static_cast<size_t>(j)];
        }
        for (int c = 0; c < dv; ++c) {
            double acc = 0.0;
            for (int j = 0; j < lk; ++j) acc += w[static_cast<size_t>(j)] / sum * v.at(j, c);
            out.at(i, c) = acc;
        }
    }
    return out;
}

int cmd_attn_check(RunConfig& rc) {
    Rng rng(rc.checks.seed);
    double dev_global = 0.0, dev_guided = 0.0, dev_shift = 0.0, dev_rowsum = 0.0;
    double dev_restricted = 0.0;
    const int kInstances = 250;
    for (int it = 0; it < kInstances; ++it) {
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
            any_fg = any_fg || f > 0.5;
        }
        const double lambda = static_cast<double>(rng.uniform_int(5));

        const Tensor og = global_attention(inp);
        const Tensor ogd = guided_attention(inp, boost_bias(fg, lambda));
        const Tensor ng = naive_attention(inp.Q, inp.K, inp.V, {}, 0.0);
        const Tensor nd = naive_attention(inp.Q, inp.K, inp.V, fg, lambda);
        for (size_t i = 0; i < og.size(); ++i) {
            dev_global = std::max(dev_global, std::abs(og[i] - ng[i]));
            dev_guided = std::max(dev_guided, std::abs(ogd[i] - nd[i]));
        }

        // Constant bias on every key shifts all logits equally: no effect.
        const Tensor shifted = guided_attention(inp, boost_bias(std::vector<double>(fg.size(), 1.0), 3.0));
        for (size_t i = 0; i < og.size(); ++i)
            dev_shift = std::max(dev_shift, std::abs(shifted[i] - og[i]));

        // All-ones values expose the attention row sums directly.
        AttentionInputs ones = inp;
        ones.V = Tensor({lk, 1});
        for (size_t i = 0; i < ones.V.size(); ++i) ones.V[i] = 1.0;
        const Tensor rs_g = global_attention(ones);
        const Tensor rs_d = guided_attention(ones, boost_bias(fg, lambda));
        for (size_t i = 0; i < rs_g.size(); ++i) {
            dev_rowsum = std::max(dev_rowsum, std::abs(rs_g[i] - 1.0));
            dev_rowsum = std::max(dev_rowsum, std::abs(rs_d[i] - 1.0));
        }

        // Huge boost restricts attention to the flagged keys.
        if (any_fg) {
            const Tensor limit = guided_attention(inp, boost_bias(fg, 1e4));
            std::vector<int> keep;
            for (int j = 0; j < lk; ++j)
                if (fg[static_cast<size_t>(j)] > 0.5) keep.push_back(j);
            AttentionInputs sub;
            sub.Q = inp.Q;
            sub.K = Tensor({static_cast<int>(keep.size()), d});
            sub.V = Tensor({static_cast<int>(keep.size()), dv});
            for (size_t j = 0; j < keep.size(); ++j) {
                for (int t = 0; t < d; ++t) sub.K.at(static_cast<int>(j), t) = inp.K.at(keep[j], t);
                for (int t = 0; t < dv; ++t) sub.V.at(static_cast<int>(j), t) = inp.V.at(keep[j], t);
            }
            const Tensor restricted = global_attention(sub);
            for (size_t i = 0; i < limit.size(); ++i)
                dev_restricted = std::max(dev_restricted, std::abs(limit[i] - restricted[i]));
        }
    }
    std::printf(
        "attn-check: global=%.3g guided=%.3g shift=%.3g rowsum=%.3g restricted=%.3g over %d "
        "instances\n",
        dev_global, dev_guided, dev_shift, dev_rowsum, dev_restricted, kInstances);
    if (dev_global > 1e-6 || dev_guided > 1e-6 || dev_shift > 1e-6 || dev_rowsum > 1e-6 ||
        dev_restricted > 1e-3)
        throw NumericFailureError("attn-check: deviation beyond tolerance");
    return 0;
}

int cmd_grad_check(RunConfig& rc) {
    const GradCheckReport rep = grad_check(rc.checks.seed);
    std::printf(
        "grad-check: net max rel dev %.3g over %zu params; estimator max rel dev %.3g over %zu "
        "params\n",
        rep.max_rel_net, rep.n_net, rep.max_rel_est, rep.n_est);
    if (!rep.pass())
        throw NumericFailureError("grad-check: deviation beyond tolerance (net " +
                                  std::to_string(rep.tol_net) + ", estimator " +
                                  std::to_string(rep.tol_est) + ")");
    return 0;
}

int cmd_anchor_demo(RunConfig& rc, const std::string& data_dir) {
    SceneSample s;
    if (data_dir.empty()) {
        s = generate_sample(small_scene_gen(), rc.seed);
    } else {
        s = scene_from_dir(data_dir);
    }
    if (s.center_world.empty()) throw IoError("anchor-demo: sample carries no center record");
    const int n = static_cast<int>(s.center_world.size());
    std::vector<Pixel> centers;
    centers.reserve(static_cast<size_t>(n));
    for (int f = 0; f < n; ++f) {
        const Vec3 pc = s.cam_a.world_to_camera(s.center_world[static_cast<size_t>(f)]);
        centers.push_back({project(pc, s.cam_a), pc.z});
    }
    const int consensus = std::min(5, n);
    const AnchorResult res = anchor_track(centers, s.cam_a, s.cam_b, consensus, rc.seed);

    Vec3 mean{};
    for (int idx : res.sample_indices) {
        const Vec3 pb = s.cam_b.world_to_camera(s.center_world[static_cast<size_t>(idx)]);
        mean = mean + pb;
    }
    mean = mean * (1.0 / static_cast<double>(res.sample_indices.size()));
    const Vec2 gt = project(mean, s.cam_b);
    const double err = std::hypot(res.anchor2d.x - gt.x, res.anchor2d.y - gt.y);
    std::printf("anchor-demo: anchor2d=(%.4f, %.4f) ground-truth=(%.4f, %.4f) error=%.3g px\n",
                res.anchor2d.x, res.anchor2d.y, gt.x, gt.y, err);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"4D scene completion toolkit: calibrated two-view data, depth warping, "
                 "confidence-scheduled flow matching"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir;
    uint64_t seed = 0;
    int workers = 0;
    int num_samples = 0, stage = 0;
    long long steps = 0;
    std::string task, checkpoint;

    CLI::Option* o_config = app.add_option("--config", config_path, "JSON run configuration");
    CLI::Option* o_out = app.add_option("--out", out_dir, "output directory");
    CLI::Option* o_seed = app.add_option("--seed", seed, "root seed");
    CLI::Option* o_workers = app.add_option("--workers", workers, "worker threads");

    CLI::App* c_gen = app.add_subcommand("gen-data", "generate a two-view dataset");
    CLI::Option* o_num = c_gen->add_option("--num-samples", num_samples, "sample count");
    CLI::App* c_warp = app.add_subcommand("warp", "splat view A into view B for one sample");
    CLI::Option* o_wdata = c_warp->add_option("--data", data_dir, "sample directory");
    CLI::App* c_train = app.add_subcommand("train", "train the velocity network");
    CLI::Option* o_task = c_train->add_option("--task", task, "toy or scene");
    CLI::Option* o_steps = c_train->add_option("--steps", steps, "training steps");
    CLI::Option* o_stage = c_train->add_option("--stage", stage, "1 or 2")->check(CLI::Range(1, 2));
    CLI::Option* o_tdata = c_train->add_option("--data", data_dir, "dataset directory (scene task)");
    CLI::App* c_sample = app.add_subcommand("sample", "draw from a trained model");
    CLI::Option* o_sckpt = c_sample->add_option("--checkpoint", checkpoint, "model checkpoint");
    CLI::Option* o_stask = c_sample->add_option("--task", task, "toy or scene");
    CLI::App* c_eval = app.add_subcommand("eval", "metrics for a trained model");
    CLI::Option* o_eckpt = c_eval->add_option("--checkpoint", checkpoint, "model checkpoint");
    CLI::App* c_attn = app.add_subcommand("attn-check", "attention oracle suite");
    CLI::App* c_grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
    CLI::App* c_anchor = app.add_subcommand("anchor-demo", "anchor tracking demonstration");
    CLI::Option* o_adata = c_anchor->add_option("--data", data_dir, "sample directory");

    for (CLI::App* sub : {c_gen, c_warp, c_train, c_sample, c_eval, c_attn, c_grad, c_anchor})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        log_level();  // validate WARP4D_LOG before doing any work

        RunConfig rc;
        if (o_config->count()) rc = load_run_config(config_path);
        if (o_seed->count()) rc.seed = seed;
        if (o_out->count()) rc.out = out_dir;
        if (o_workers->count()) rc.gen_data.workers = workers;
        if (o_num->count()) rc.gen_data.num_samples = num_samples;
        if (o_wdata->count()) rc.warp.data = data_dir;
        if (o_task->count()) rc.train.task = task;
        if (o_steps->count()) rc.train.train.steps = steps;
        if (o_stage->count()) rc.train.train.stage = stage;
        if (o_sckpt->count()) rc.sample.checkpoint = checkpoint;
        if (o_stask->count()) rc.sample.task = task;
        if (o_eckpt->count()) rc.eval.checkpoint = checkpoint;

        if (c_gen->parsed()) return cmd_gen_data(rc);
        if (c_warp->parsed()) return cmd_warp(rc);
        if (c_train->parsed()) return cmd_train(rc, o_tdata->count() ? data_dir : "");
        if (c_sample->parsed()) return cmd_sample(rc);
        if (c_eval->parsed()) return cmd_eval(rc);
        if (c_attn->parsed()) return cmd_attn_check(rc);
        if (c_grad->parsed()) return cmd_grad_check(rc);
        if (c_anchor->parsed()) return cmd_anchor_demo(rc, o_adata->count() ? data_dir : "");
        throw DomainError("no subcommand given");
    } catch (const ValidationError& e) {
        log_error(e.what());
        return 1;
    } catch (const NumericFailureError& e) {
        log_error(e.what());
        return 2;
    }
}
