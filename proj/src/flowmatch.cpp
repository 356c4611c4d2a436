#include "warp4d/flowmatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "warp4d/metrics.hpp"
#include "warp4d/warp.hpp"

namespace warp4d {

namespace {

Tensor with_shape(const Tensor& t, const std::vector<int>& shape) {
    Tensor out(shape);
    if (out.size() != t.size())
        throw DimensionError("reshape: element counts disagree");
    for (size_t i = 0; i < t.size(); ++i) out[i] = t[i];
    return out;
}

void time_features(double t, double* f) {
    for (int k = 0; k < kTimeFeatures / 2; ++k) {
        const double w = std::numbers::pi * static_cast<double>(1 << k);
        f[2 * k] = std::sin(w * t);
        f[2 * k + 1] = std::cos(w * t);
    }
}

ParamLayout make_layout(const NetConfig& cfg) {
    ParamLayout lay;
    const int d = cfg.dim, cin = 2 * cfg.channels + 1, f = 4 * cfg.dim;
    lay.add("embed.w", {d, cin});
    lay.add("embed.b", {d});
    lay.add("time.w", {d, kTimeFeatures});
    lay.add("time.b", {d});
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "blk" + std::to_string(b) + ".";
        lay.add(p + "ln1.g", {d});
        lay.add(p + "ln1.b", {d});
        lay.add(p + "attn.wq", {d, d});
        lay.add(p + "attn.wk", {d, d});
        lay.add(p + "attn.wv", {d, d});
        lay.add(p + "attn.wo", {d, d});
        lay.add(p + "ln2.g", {d});
        lay.add(p + "ln2.b", {d});
        lay.add(p + "ffn.w1", {f, d});
        lay.add(p + "ffn.b1", {f});
        lay.add(p + "ffn.w2", {d, f});
        lay.add(p + "ffn.b2", {d});
    }
    lay.add("final_ln.g", {d});
    lay.add("final_ln.b", {d});
    lay.add("head.w", {cfg.channels, d});
    lay.add("head.b", {cfg.channels});
    return lay;
}

bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

void NetConfig::validate() const {
    if (channels < 1) throw DomainError("net: channels must be >= 1");
    if (dim < 2) throw DomainError("net: dim must be >= 2");
    if (blocks < 1) throw DomainError("net: blocks must be >= 1");
    if (!(lambda >= 0.0)) throw DomainError("net: lambda must be >= 0");
}

void quantize_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

VelocityNet VelocityNet::init(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    VelocityNet net;
    net.cfg = cfg;
    net.layout = make_layout(cfg);
    net.theta.assign(net.layout.total, 0.0);
    const Rng root(seed);
    for (const ParamLayout::Segment& s : net.layout.segments) {
        double* w = net.theta.data() + s.offset;
        if (ends_with(s.name, ".g")) {
            std::fill(w, w + s.count, 1.0);
        } else if (ends_with(s.name, ".b") || ends_with(s.name, ".b1") ||
                   ends_with(s.name, ".b2")) {
            // already zero
        } else {
            Rng rng = root.stream(s.name);
            const int fan_in = s.shape.back();
            double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
            // Small head keeps the initial field near zero without killing
            // upstream gradients.
            if (s.name == "head.w") scale *= 0.1;
            init_gaussian(rng, w, s.count, scale);
        }
    }
    quantize_f32(net.theta);
    return net;
}

std::vector<NamedTensor> VelocityNet::to_named() const {
    std::vector<NamedTensor> out;
    out.push_back({"net.cfg",
                   {4},
                   {static_cast<double>(cfg.channels), static_cast<double>(cfg.dim),
                    static_cast<double>(cfg.blocks), cfg.lambda}});
    for (const ParamLayout::Segment& s : layout.segments) {
        NamedTensor t;
        t.name = "net." + s.name;
        t.shape = s.shape;
        t.data.assign(theta.begin() + static_cast<ptrdiff_t>(s.offset),
                      theta.begin() + static_cast<ptrdiff_t>(s.offset + s.count));
        out.push_back(std::move(t));
    }
    return out;
}

VelocityNet VelocityNet::from_named(const std::vector<NamedTensor>& named) {
    const NamedTensor* meta = nullptr;
    for (const NamedTensor& t : named)
        if (t.name == "net.cfg") meta = &t;
    if (!meta || meta->data.size() != 4) throw IoError("checkpoint: missing net.cfg");
    NetConfig cfg;
    cfg.channels = static_cast<int>(meta->data[0]);
    cfg.dim = static_cast<int>(meta->data[1]);
    cfg.blocks = static_cast<int>(meta->data[2]);
    cfg.lambda = meta->data[3];
    cfg.validate();
    VelocityNet net;
    net.cfg = cfg;
    net.layout = make_layout(cfg);
    net.theta.assign(net.layout.total, 0.0);
    for (const ParamLayout::Segment& s : net.layout.segments) {
        const std::string want = "net." + s.name;
        const NamedTensor* found = nullptr;
        for (const NamedTensor& t : named)
            if (t.name == want) found = &t;
        if (!found) throw IoError("checkpoint: missing tensor " + want);
        if (found->data.size() != s.count)
            throw DimensionError("checkpoint: tensor " + want + " has the wrong size");
        std::copy(found->data.begin(), found->data.end(),
                  net.theta.begin() + static_cast<ptrdiff_t>(s.offset));
    }
    return net;
}

Tensor net_forward(const VelocityNet& net, const Tensor& x_t, const Tensor& x_warp,
                   const Tensor& c, double t, const std::vector<double>& key_fg,
                   double alpha, NetTrace* trace) {
    const NetConfig& cfg = net.cfg;
    const int ch = cfg.channels, d = cfg.dim, cin = 2 * ch + 1, f = 4 * d;
    if (x_t.ndim() != 2 || x_t.dim(1) != ch)
        throw DimensionError("net_forward: x_t must be (S, channels)");
    const int s = x_t.dim(0);
    if (x_warp.ndim() != 2 || x_warp.dim(0) != s || x_warp.dim(1) != ch)
        throw DimensionError("net_forward: x_warp must match x_t");
    if (static_cast<int>(c.size()) != s)
        throw DimensionError("net_forward: c must hold one value per token");
    if (static_cast<int>(key_fg.size()) != s)
        throw DimensionError("net_forward: key_fg must hold one flag per token");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("net_forward: alpha must lie in [0,1]");
    if (!std::isfinite(t)) throw DomainError("net_forward: t must be finite");

    NetTrace local;
    NetTrace& tr = trace ? *trace : local;
    tr.s = s;
    tr.x_in.assign(static_cast<size_t>(s) * cin, 0.0);
    for (int i = 0; i < s; ++i) {
        double* row = tr.x_in.data() + static_cast<size_t>(i) * cin;
        for (int j = 0; j < ch; ++j) row[j] = x_t.at(i, j);
        for (int j = 0; j < ch; ++j) row[ch + j] = x_warp.at(i, j);
        row[2 * ch] = c[static_cast<size_t>(i)];
    }
    tr.tfeat.assign(kTimeFeatures, 0.0);
    time_features(t, tr.tfeat.data());

    const size_t sd = static_cast<size_t>(s) * d;
    tr.h0.assign(sd, 0.0);
    linear_fwd(tr.x_in.data(), s, cin, net.seg("embed.w"), net.seg("embed.b"), d, tr.h0.data());
    std::vector<double> te(static_cast<size_t>(d), 0.0);
    linear_fwd(tr.tfeat.data(), 1, kTimeFeatures, net.seg("time.w"), net.seg("time.b"), d,
               te.data());
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < d; ++j) tr.h0[static_cast<size_t>(i) * d + j] += te[static_cast<size_t>(j)];

    tr.blocks.assign(static_cast<size_t>(cfg.blocks), BlockTrace{});
    const std::vector<double>* h_prev = &tr.h0;
    for (int b = 0; b < cfg.blocks; ++b) {
        BlockTrace& bt = tr.blocks[static_cast<size_t>(b)];
        const std::string p = "blk" + std::to_string(b) + ".";
        bt.ln1_out.assign(sd, 0.0);
        bt.ln1_mean.assign(static_cast<size_t>(s), 0.0);
        bt.ln1_rstd.assign(static_cast<size_t>(s), 0.0);
        layernorm_fwd(h_prev->data(), s, d, net.seg(p + "ln1.g"), net.seg(p + "ln1.b"),
                      bt.ln1_out.data(), bt.ln1_mean.data(), bt.ln1_rstd.data());
        std::vector<double> attn_y(sd, 0.0);
        twopath_attn_fwd(bt.ln1_out.data(), s, d, net.seg(p + "attn.wq"), net.seg(p + "attn.wk"),
                         net.seg(p + "attn.wv"), net.seg(p + "attn.wo"), key_fg.data(),
                         cfg.lambda, alpha, attn_y.data(), bt.attn);
        bt.h_attn.assign(sd, 0.0);
        for (size_t i = 0; i < sd; ++i) bt.h_attn[i] = (*h_prev)[i] + attn_y[i];

        bt.ln2_out.assign(sd, 0.0);
        bt.ln2_mean.assign(static_cast<size_t>(s), 0.0);
        bt.ln2_rstd.assign(static_cast<size_t>(s), 0.0);
        layernorm_fwd(bt.h_attn.data(), s, d, net.seg(p + "ln2.g"), net.seg(p + "ln2.b"),
                      bt.ln2_out.data(), bt.ln2_mean.data(), bt.ln2_rstd.data());
        std::vector<double> z1(static_cast<size_t>(s) * f, 0.0);
        linear_fwd(bt.ln2_out.data(), s, d, net.seg(p + "ffn.w1"), net.seg(p + "ffn.b1"), f,
                   z1.data());
        bt.ffn_a1.assign(static_cast<size_t>(s) * f, 0.0);
        tanh_fwd(z1.data(), z1.size(), bt.ffn_a1.data());
        std::vector<double> y2(sd, 0.0);
        linear_fwd(bt.ffn_a1.data(), s, f, net.seg(p + "ffn.w2"), net.seg(p + "ffn.b2"), d,
                   y2.data());
        bt.h_ffn.assign(sd, 0.0);
        for (size_t i = 0; i < sd; ++i) bt.h_ffn[i] = bt.h_attn[i] + y2[i];
        h_prev = &bt.h_ffn;
    }

    tr.lnf_out.assign(sd, 0.0);
    tr.lnf_mean.assign(static_cast<size_t>(s), 0.0);
    tr.lnf_rstd.assign(static_cast<size_t>(s), 0.0);
    layernorm_fwd(h_prev->data(), s, d, net.seg("final_ln.g"), net.seg("final_ln.b"),
                  tr.lnf_out.data(), tr.lnf_mean.data(), tr.lnf_rstd.data());
    Tensor out({s, ch});
    std::vector<double> head(static_cast<size_t>(s) * ch, 0.0);
    linear_fwd(tr.lnf_out.data(), s, d, net.seg("head.w"), net.seg("head.b"), ch, head.data());
    for (size_t i = 0; i < head.size(); ++i) out[i] = head[i];
    return out;
}

void net_backward(const VelocityNet& net, const NetTrace& tr, const Tensor& dout,
                  double alpha, std::vector<double>& dtheta) {
    const NetConfig& cfg = net.cfg;
    const int ch = cfg.channels, d = cfg.dim, cin = 2 * ch + 1, f = 4 * d;
    const int s = tr.s;
    if (dout.ndim() != 2 || dout.dim(0) != s || dout.dim(1) != ch)
        throw DimensionError("net_backward: dout shape mismatch");
    if (dtheta.size() != net.theta.size())
        throw DimensionError("net_backward: dtheta size mismatch");
    const size_t sd = static_cast<size_t>(s) * d;
    auto g = [&](const std::string& name) { return dtheta.data() + net.layout.find(name).offset; };

    std::vector<double> ddout(dout.size());
    for (size_t i = 0; i < dout.size(); ++i) ddout[i] = dout[i];

    std::vector<double> dlnf(sd, 0.0);
    linear_bwd(tr.lnf_out.data(), s, d, net.seg("head.w"), ch, ddout.data(), dlnf.data(),
               g("head.w"), g("head.b"));

    const std::vector<double>* h_last = cfg.blocks > 0
                                            ? &tr.blocks[static_cast<size_t>(cfg.blocks - 1)].h_ffn
                                            : &tr.h0;
    std::vector<double> dh(sd, 0.0);
    layernorm_bwd(h_last->data(), s, d, net.seg("final_ln.g"), tr.lnf_mean.data(),
                  tr.lnf_rstd.data(), dlnf.data(), dh.data(), g("final_ln.g"), g("final_ln.b"));

    for (int b = cfg.blocks - 1; b >= 0; --b) {
        const BlockTrace& bt = tr.blocks[static_cast<size_t>(b)];
        const std::string p = "blk" + std::to_string(b) + ".";
        const std::vector<double>* h_in =
            b > 0 ? &tr.blocks[static_cast<size_t>(b - 1)].h_ffn : &tr.h0;

        // Feedforward residual: dh currently holds d(h_ffn); the residual
        // branch passes it through while the ffn branch adds its share.
        std::vector<double> da1(static_cast<size_t>(s) * f, 0.0);
        linear_bwd(bt.ffn_a1.data(), s, f, net.seg(p + "ffn.w2"), d, dh.data(), da1.data(),
                   g(p + "ffn.w2"), g(p + "ffn.b2"));
        std::vector<double> dz1(static_cast<size_t>(s) * f, 0.0);
        tanh_bwd(bt.ffn_a1.data(), da1.data(), da1.size(), dz1.data());
        std::vector<double> dln2(sd, 0.0);
        linear_bwd(bt.ln2_out.data(), s, d, net.seg(p + "ffn.w1"), f, dz1.data(), dln2.data(),
                   g(p + "ffn.w1"), g(p + "ffn.b1"));
        layernorm_bwd(bt.h_attn.data(), s, d, net.seg(p + "ln2.g"), bt.ln2_mean.data(),
                      bt.ln2_rstd.data(), dln2.data(), dh.data(), g(p + "ln2.g"),
                      g(p + "ln2.b"));

        // Attention residual, same pattern.
        std::vector<double> dln1(sd, 0.0);
        twopath_attn_bwd(bt.ln1_out.data(), bt.attn, net.seg(p + "attn.wq"),
                         net.seg(p + "attn.wk"), net.seg(p + "attn.wv"), net.seg(p + "attn.wo"),
                         alpha, dh.data(), dln1.data(), g(p + "attn.wq"), g(p + "attn.wk"),
                         g(p + "attn.wv"), g(p + "attn.wo"));
        layernorm_bwd(h_in->data(), s, d, net.seg(p + "ln1.g"), bt.ln1_mean.data(),
                      bt.ln1_rstd.data(), dln1.data(), dh.data(), g(p + "ln1.g"),
                      g(p + "ln1.b"));
    }

    // dh is now d(h0). The time embedding was broadcast-added to every row.
    std::vector<double> dte(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < d; ++j) dte[static_cast<size_t>(j)] += dh[static_cast<size_t>(i) * d + j];
    linear_bwd(tr.tfeat.data(), 1, kTimeFeatures, net.seg("time.w"), d, dte.data(), nullptr,
               g("time.w"), g("time.b"));
    linear_bwd(tr.x_in.data(), s, cin, net.seg("embed.w"), d, dh.data(), nullptr, g("embed.w"),
               g("embed.b"));
}

// ---------------------------------------------------------------------------
// Batch assembly.
// ---------------------------------------------------------------------------

void draw_flow_point(FlowElem& e, const NoiseScheduleConfig& sched, VelocityMode mode,
                     Rng& rng) {
    const int s = e.x1.dim(0), ch = e.x1.dim(1);
    e.t = rng.uniform();
    e.x0 = Tensor({s, ch});
    for (size_t i = 0; i < e.x0.size(); ++i) e.x0[i] = rng.normal();
    e.sigma_t = sigma_map(e.c, e.t, sched);
    e.x_t = flow_state(e.x0, e.x1, e.sigma_t);
    e.v_target = velocity_target(e.x0, e.x1, e.c, sched, mode);
}

void ToySpec::validate() const {
    if (modes.empty()) throw DomainError("toy: at least one mode required");
    if (weights.size() != modes.size())
        throw DomainError("toy: one weight per mode required");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw DomainError("toy: weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("toy: weights must sum to 1");
    if (!(sigma > 0.0)) throw DomainError("toy: sigma must be positive");
}

std::array<double, 2> sample_toy(const ToySpec& spec, Rng& rng) {
    const double u = rng.uniform();
    size_t pick = spec.modes.size() - 1;
    double acc = 0.0;
    for (size_t i = 0; i < spec.weights.size(); ++i) {
        acc += spec.weights[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    return {spec.modes[pick][0] + spec.sigma * rng.normal(),
            spec.modes[pick][1] + spec.sigma * rng.normal()};
}

FlowElem make_toy_elem(const ToySpec& spec, const NoiseScheduleConfig& sched,
                       VelocityMode mode, Rng& rng) {
    FlowElem e;
    const std::array<double, 2> pt = sample_toy(spec, rng);
    e.x1 = Tensor({1, 2});
    e.x1[0] = pt[0];
    e.x1[1] = pt[1];
    e.x_warp = Tensor({1, 2});
    e.c = Tensor({1});
    e.m_geo_lat = Tensor({1});
    e.fg.assign(1, 0.0);
    draw_flow_point(e, sched, mode, rng);
    return e;
}

void SceneTokenConfig::validate() const {
    if (latent_h < 1 || latent_w < 1) throw DomainError("tokens: latent dims must be positive");
    if (blur_radius < 0) throw DomainError("tokens: blur radius must be >= 0");
    if (!(fg_threshold >= 0.0 && fg_threshold <= 1.0))
        throw DomainError("tokens: fg threshold must lie in [0,1]");
}

FlowElem scene_frame_elem(const SceneSample& sample, int frame,
                          const SceneTokenConfig& tok) {
    tok.validate();
    if (frame < 0 || frame >= sample.frames_a.dim(0))
        throw DomainError("scene_frame_elem: frame index out of range");
    const int lh = tok.latent_h, lw = tok.latent_w, s = lh * lw;

    const Tensor fa = sample.frames_a.frame(frame);
    const Tensor da = sample.depths_a.frame(frame);
    const Tensor fb = sample.frames_b.frame(frame);
    const Tensor mb = sample.masks_b.frame(frame);
    const int h = fa.dim(0), w = fa.dim(1);

    const PointCloud cloud = depth_to_pointcloud(fa, da, sample.cam_a);
    const WarpedFrame wf = forward_warp(cloud, sample.cam_b, h, w);

    FlowElem e;
    e.lat_h = lh;
    e.lat_w = lw;
    e.x1 = with_shape(area_resize(fb, lh, lw), {s, 3});
    e.z_warp_lat = area_resize(wf.rgb, lh, lw);
    e.x_warp = with_shape(e.z_warp_lat, {s, 3});
    e.m_geo_aux = area_resize(wf.m_geo, lh, lw);
    e.m_geo_lat = with_shape(e.m_geo_aux, {s});
    e.c = with_shape(heuristic_confidence(wf.m_geo, tok.blur_radius, lh, lw), {s});
    const Tensor fg_lat = area_resize(mb, lh, lw);
    e.fg.assign(static_cast<size_t>(s), 0.0);
    for (int i = 0; i < s; ++i) e.fg[static_cast<size_t>(i)] = fg_lat[static_cast<size_t>(i)] > tok.fg_threshold ? 1.0 : 0.0;
    e.x_gt_img = fb;
    e.x_warp_img = wf.rgb;
    e.m_geo_img = wf.m_geo;
    return e;
}

std::vector<FlowElem> build_scene_pool(const GenConfig& gen, const SceneTokenConfig& tok,
                                       int n_samples, uint64_t seed) {
    if (n_samples < 1) throw DomainError("build_scene_pool: need at least one sample");
    std::vector<FlowElem> pool;
    const Rng root(seed);
    for (int i = 0; i < n_samples; ++i) {
        const uint64_t s_seed = root.stream(static_cast<uint64_t>(i)).next_u64();
        const SceneSample sample = generate_sample(gen, s_seed);
        for (int f = 0; f < gen.n_frames; ++f)
            pool.push_back(scene_frame_elem(sample, f, tok));
    }
    return pool;
}

BatchSource make_toy_source(ToySpec spec) {
    spec.validate();
    return [spec](const TrainConfig& cfg, int64_t, Rng& rng) {
        FlowBatch b;
        b.elems.reserve(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i)
            b.elems.push_back(make_toy_elem(spec, cfg.schedule, cfg.velocity_mode, rng));
        return b;
    };
}

BatchSource make_scene_source(std::vector<FlowElem> pool) {
    if (pool.empty()) throw DomainError("make_scene_source: empty pool");
    return [pool = std::move(pool)](const TrainConfig& cfg, int64_t, Rng& rng) {
        FlowBatch b;
        b.elems.reserve(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            FlowElem e = pool[rng.uniform_int(pool.size())];
            if (cfg.zero_confidence)
                for (size_t j = 0; j < e.c.size(); ++j) e.c[j] = 0.0;
            draw_flow_point(e, cfg.schedule, cfg.velocity_mode, rng);
            b.elems.push_back(std::move(e));
        }
        return b;
    };
}

// ---------------------------------------------------------------------------
// Loss and training.
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (steps < 1) throw DomainError("train: steps must be >= 1");
    if (batch_size < 1) throw DomainError("train: batch size must be >= 1");
    if (!(lr > 0.0)) throw DomainError("train: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("train: momentum must lie in [0,1)");
    if (stage != 1 && stage != 2) throw DomainError("train: stage must be 1 or 2");
    if (est_hidden < 1) throw DomainError("train: est_hidden must be >= 1");
    net.validate();
    schedule.validate();
    fusion.validate();
}

LossResult loss(const VelocityNet& net, const EstimatorParams& est, const FlowBatch& batch,
                double alpha) {
    if (batch.elems.empty()) throw DomainError("loss: empty batch");
    LossResult r;
    r.dtheta.assign(net.theta.size(), 0.0);
    r.dest = est.zeros_like();

    size_t n_total = 0;
    for (const FlowElem& e : batch.elems) n_total += e.x_t.size();

    double fm_sum = 0.0;
    for (const FlowElem& e : batch.elems) {
        NetTrace tr;
        const Tensor v = net_forward(net, e.x_t, e.x_warp, e.c, e.t, e.fg, alpha, &tr);
        Tensor dout(std::vector<int>{v.dim(0), v.dim(1)});
        for (size_t i = 0; i < v.size(); ++i) {
            const double resid = v[i] - e.v_target[i];
            fm_sum += resid * resid;
            dout[i] = 2.0 * resid / static_cast<double>(n_total);
        }
        net_backward(net, tr, dout, alpha, r.dtheta);
    }
    r.fm = fm_sum / static_cast<double>(n_total);
    if (!std::isfinite(r.fm))
        throw NumericFailureError("loss: flow-matching term is non-finite");

    size_t n_aux = 0;
    for (const FlowElem& e : batch.elems)
        if (e.has_aux()) ++n_aux;
    if (n_aux > 0) {
        double aux_sum = 0.0;
        for (const FlowElem& e : batch.elems) {
            if (!e.has_aux()) continue;
            EstimatorTrace tr;
            const Tensor c_est = estimate_confidence(e.z_warp_lat, e.m_geo_aux, est, &tr);
            const AuxLossResult ar = aux_loss(c_est, e.m_geo_img, e.x_gt_img, e.x_warp_img, est);
            const double scale = 1.0 / (static_cast<double>(c_est.size()) * static_cast<double>(n_aux));
            aux_sum += ar.loss * scale;
            Tensor dc = ar.dloss_dc;
            for (size_t i = 0; i < dc.size(); ++i) dc[i] *= scale;
            estimate_confidence_backward(est, tr, dc, r.dest);
            r.dest.lambda1_raw += ar.dloss_dlambda1_raw * scale;
            r.dest.lambda2_raw += ar.dloss_dlambda2_raw * scale;
        }
        r.aux = aux_sum;
        if (!std::isfinite(r.aux))
            throw NumericFailureError("loss: auxiliary term is non-finite");
    }
    r.total = r.fm + r.aux;
    return r;
}

TrainResult train(const TrainConfig& cfg, const BatchSource& source) {
    cfg.validate();
    const Rng root(cfg.seed);
    VelocityNet net = VelocityNet::init(cfg.net, root.stream("init").next_u64());
    EstimatorParams est =
        EstimatorParams::init(cfg.net.channels + 1, cfg.est_hidden, root.stream("est").next_u64());
    {
        std::vector<double> flat = est.flatten();
        quantize_f32(flat);
        est.unflatten(flat);
    }

    std::vector<double> vel_net(net.theta.size(), 0.0);
    std::vector<double> est_flat = est.flatten();
    std::vector<double> vel_est(est_flat.size(), 0.0);

    TrainResult result;
    result.curve.reserve(static_cast<size_t>(cfg.steps));
    const Rng data_root = root.stream("data");
    for (int64_t step = 0; step < cfg.steps; ++step) {
        Rng rng = data_root.stream(static_cast<uint64_t>(step));
        FlowBatch batch = source(cfg, step, rng);
        if (batch.elems.empty()) throw DomainError("train: batch source produced no elements");
        const double alpha = alpha_schedule(step, cfg.fusion);
        LossResult L = loss(net, est, batch, alpha);
        if (L.total > 1e6)
            throw NumericFailureError("train: diverged at step " + std::to_string(step) +
                                      " (loss " + std::to_string(L.total) + ")");
        if (cfg.stage == 2) {
            // Stage 2 freezes the interaction-aware attention weights.
            for (const ParamLayout::Segment& seg : net.layout.segments)
                if (seg.name.find(".attn.") != std::string::npos)
                    std::fill(L.dtheta.begin() + static_cast<ptrdiff_t>(seg.offset),
                              L.dtheta.begin() + static_cast<ptrdiff_t>(seg.offset + seg.count),
                              0.0);
        }
        for (size_t i = 0; i < net.theta.size(); ++i) {
            vel_net[i] = cfg.momentum * vel_net[i] - cfg.lr * L.dtheta[i];
            net.theta[i] += vel_net[i];
        }
        quantize_f32(net.theta);

        est_flat = est.flatten();
        const std::vector<double> dest_flat = L.dest.flatten();
        for (size_t i = 0; i < est_flat.size(); ++i) {
            vel_est[i] = cfg.momentum * vel_est[i] - cfg.lr * dest_flat[i];
            est_flat[i] += vel_est[i];
        }
        quantize_f32(est_flat);
        est.unflatten(est_flat);

        result.curve.push_back({step, L.fm, L.aux, alpha});
    }
    result.net = std::move(net);
    result.est = std::move(est);
    return result;
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path + " for writing");
    std::fprintf(fp, "step,fm_loss,aux_loss,alpha\n");
    for (const LossRow& row : curve)
        std::fprintf(fp, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(row.step), row.fm,
                     row.aux, row.alpha);
    if (std::fclose(fp) != 0) throw IoError("failed to close " + path);
}

void save_model(const std::string& path, const VelocityNet& net, const EstimatorParams& est) {
    std::vector<NamedTensor> all = net.to_named();
    std::vector<NamedTensor> est_named = est.to_named();
    all.insert(all.end(), est_named.begin(), est_named.end());
    save_checkpoint(path, all);
}

ModelBundle load_model(const std::string& path) {
    const std::vector<NamedTensor> named = load_checkpoint(path);
    ModelBundle b;
    b.net = VelocityNet::from_named(named);
    b.est = EstimatorParams::from_named(named);
    return b;
}

// ---------------------------------------------------------------------------
// Sampling and evaluation.
// ---------------------------------------------------------------------------

Tensor generate_element(const VelocityNet& net, const FlowElem& e, const Tensor& x0,
                        const NoiseScheduleConfig& sched, VelocityMode mode, double alpha,
                        int n_steps) {
    const auto field = [&](const Tensor& x, double t) {
        return net_forward(net, x, e.x_warp, e.c, t, e.fg, alpha, nullptr);
    };
    return sample_ode(field, x0, e.c, sched, n_steps, mode);
}

Tensor sample_toy_points(const VelocityNet& net, const ToySpec& spec, int n, int ode_steps,
                         const NoiseScheduleConfig& sched, VelocityMode mode, uint64_t seed) {
    spec.validate();
    if (n < 1) throw DomainError("sample_toy_points: n must be >= 1");
    FlowElem e;
    e.x_warp = Tensor({1, 2});
    e.c = Tensor({1});
    e.fg.assign(1, 0.0);
    Tensor points({n, 2});
    const Rng root = Rng(seed).stream("sample");
    for (int i = 0; i < n; ++i) {
        Rng rng = root.stream(static_cast<uint64_t>(i));
        Tensor x0({1, 2});
        x0[0] = rng.normal();
        x0[1] = rng.normal();
        const Tensor x1 = generate_element(net, e, x0, sched, mode, 0.0, ode_steps);
        points.at(i, 0) = x1[0];
        points.at(i, 1) = x1[1];
    }
    return points;
}

std::array<double, 2> toy_mode_weights(const Tensor& points) {
    if (points.ndim() != 2 || points.dim(1) != 2 || points.dim(0) < 1)
        throw DimensionError("toy_mode_weights: points must be (n, 2)");
    const int n = points.dim(0);
    int neg = 0;
    for (int i = 0; i < n; ++i)
        if (points.at(i, 0) < 0.0) ++neg;
    const double w_neg = static_cast<double>(neg) / static_cast<double>(n);
    return {w_neg, 1.0 - w_neg};
}

EvalResult evaluate(const VelocityNet& net, const std::vector<FlowElem>& elems,
                    const NoiseScheduleConfig& sched, VelocityMode mode, double alpha,
                    int n_steps, uint64_t seed) {
    if (elems.empty()) throw DomainError("evaluate: no elements");
    EvalResult r;
    const int ch = net.cfg.channels;
    double sse_holes = 0.0, sse_covered = 0.0;
    const Rng root = Rng(seed).stream("eval");
    for (size_t idx = 0; idx < elems.size(); ++idx) {
        const FlowElem& e = elems[idx];
        if (e.lat_h < 1 || e.lat_w < 1)
            throw DimensionError("evaluate: element lacks a latent grid");
        Rng rng = root.stream(idx);
        Tensor x0({e.lat_h * e.lat_w, ch});
        for (size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
        const Tensor gen = generate_element(net, e, x0, sched, mode, alpha, n_steps);
        const Tensor gen_img = with_shape(gen, {e.lat_h, e.lat_w, ch});
        const Tensor gt_img = with_shape(e.x1, {e.lat_h, e.lat_w, ch});
        r.psnr += psnr(gen_img, gt_img);
        r.ssim += ssim(gen_img, gt_img);
        const int s = e.lat_h * e.lat_w;
        for (int i = 0; i < s; ++i) {
            double site = 0.0;
            for (int j = 0; j < ch; ++j) {
                const double d = gen.at(i, j) - e.x1.at(i, j);
                site += d * d;
            }
            if (e.m_geo_lat[static_cast<size_t>(i)] < 0.5) {
                sse_holes += site;
                ++r.n_holes;
            } else {
                sse_covered += site;
                ++r.n_covered;
            }
        }
    }
    r.n_elems = static_cast<int>(elems.size());
    r.psnr /= r.n_elems;
    r.ssim /= r.n_elems;
    if (r.n_holes > 0) r.mse_holes = sse_holes / (static_cast<double>(r.n_holes) * ch);
    if (r.n_covered > 0) r.mse_covered = sse_covered / (static_cast<double>(r.n_covered) * ch);
    return r;
}

// ---------------------------------------------------------------------------
// Finite-difference verification.
// ---------------------------------------------------------------------------

namespace {

Tensor uniform_tensor(Rng& rng, const std::vector<int>& shape) {
    Tensor t(shape);
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return t;
}

FlowBatch grad_check_batch(uint64_t seed, int channels) {
    const NoiseScheduleConfig sched;
    FlowBatch batch;
    Rng rng = Rng(seed).stream("batch");
    for (int k = 0; k < 2; ++k) {
        FlowElem e;
        e.lat_h = 2;
        e.lat_w = 3;
        const int s = e.lat_h * e.lat_w;
        e.x1 = uniform_tensor(rng, {s, channels});
        e.z_warp_lat = uniform_tensor(rng, {e.lat_h, e.lat_w, channels});
        e.x_warp = with_shape(e.z_warp_lat, {s, channels});
        e.c = uniform_tensor(rng, {s});
        e.m_geo_aux = uniform_tensor(rng, {e.lat_h, e.lat_w});
        e.m_geo_lat = with_shape(e.m_geo_aux, {s});
        e.fg.assign(static_cast<size_t>(s), 0.0);
        for (int i = 0; i < s; ++i) e.fg[static_cast<size_t>(i)] = (i + k) % 2 ? 1.0 : 0.0;
        e.x_gt_img = uniform_tensor(rng, {16, 16, channels});
        e.x_warp_img = uniform_tensor(rng, {16, 16, channels});
        e.m_geo_img = Tensor({16, 16});
        for (size_t i = 0; i < e.m_geo_img.size(); ++i)
            e.m_geo_img[i] = rng.uniform() > 0.3 ? 1.0 : 0.0;
        draw_flow_point(e, sched, k == 0 ? VelocityMode::Plain : VelocityMode::ScheduleConsistent,
                        rng);
        batch.elems.push_back(std::move(e));
    }
    return batch;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

}  // namespace

GradCheckReport grad_check(uint64_t seed) {
    NetConfig nc;
    nc.channels = 3;
    nc.dim = 8;
    nc.blocks = 2;
    nc.lambda = 2.0;
    const Rng root(seed);
    VelocityNet net = VelocityNet::init(nc, root.stream("net").next_u64());
    EstimatorParams est = EstimatorParams::init(nc.channels + 1, 5, root.stream("est").next_u64());
    const FlowBatch batch = grad_check_batch(root.stream("data").next_u64(), nc.channels);
    const double alpha = 0.35;

    const LossResult base = loss(net, est, batch, alpha);
    GradCheckReport rep;
    rep.n_net = net.theta.size();

    for (size_t i = 0; i < net.theta.size(); ++i) {
        const double orig = net.theta[i];
        const double eps = 1e-5 * std::max(1.0, std::abs(orig));
        net.theta[i] = orig + eps;
        const double fp = loss(net, est, batch, alpha).total;
        net.theta[i] = orig - eps;
        const double fm = loss(net, est, batch, alpha).total;
        net.theta[i] = orig;
        const double fd = (fp - fm) / (2.0 * eps);
        rep.max_rel_net = std::max(rep.max_rel_net, rel_err(base.dtheta[i], fd));
    }

    std::vector<double> est_flat = est.flatten();
    const std::vector<double> dest_flat = base.dest.flatten();
    rep.n_est = est_flat.size();
    for (size_t i = 0; i < est_flat.size(); ++i) {
        const double orig = est_flat[i];
        const double eps = 1e-5 * std::max(1.0, std::abs(orig));
        EstimatorParams probe = est;
        est_flat[i] = orig + eps;
        probe.unflatten(est_flat);
        const double fp = loss(net, probe, batch, alpha).total;
        est_flat[i] = orig - eps;
        probe.unflatten(est_flat);
        const double fm = loss(net, probe, batch, alpha).total;
        est_flat[i] = orig;
        const double fd = (fp - fm) / (2.0 * eps);
        rep.max_rel_est = std::max(rep.max_rel_est, rel_err(dest_flat[i], fd));
    }
    return rep;
}

}  // namespace warp4d
