#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "warp4d/config.hpp"
#include "warp4d/flowmatch.hpp"

using namespace warp4d;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("warp4d_fm_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

bool bit_equal(double a, double b) {
    uint64_t ua, ub;
    std::memcpy(&ua, &a, 8);
    std::memcpy(&ub, &b, 8);
    return ua == ub;
}

// One tiny rendered scene shared across test cases (construction is the
// expensive part, the assertions are cheap).
const SceneSample& tiny_sample() {
    static const SceneSample s = [] {
        GenConfig gen;
        gen.n_frames = 2;
        gen.height = 48;
        gen.width = 84;
        gen.min_links = 3;
        gen.max_links = 3;
        gen.step_fraction = 0.05;
        return generate_sample(gen, 2024);
    }();
    return s;
}

SceneTokenConfig tiny_tokens() {
    SceneTokenConfig tok;
    tok.latent_h = 11;
    tok.latent_w = 12;
    return tok;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("config structs validate their domains") {
    NetConfig net;
    CHECK_NOTHROW(net.validate());
    net.channels = 0;
    CHECK_THROWS_AS(net.validate(), DomainError);
    net = NetConfig{};
    net.dim = 1;
    CHECK_THROWS_AS(net.validate(), DomainError);
    net = NetConfig{};
    net.blocks = 0;
    CHECK_THROWS_AS(net.validate(), DomainError);
    net = NetConfig{};
    net.lambda = -1.0;
    CHECK_THROWS_AS(net.validate(), DomainError);

    ToySpec toy;
    CHECK_NOTHROW(toy.validate());
    toy.weights = {0.5, 0.6};
    CHECK_THROWS_AS(toy.validate(), DomainError);
    toy = ToySpec{};
    toy.weights = {1.0};
    CHECK_THROWS_AS(toy.validate(), DomainError);  // one weight for two modes
    toy = ToySpec{};
    toy.sigma = 0.0;
    CHECK_THROWS_AS(toy.validate(), DomainError);
    toy = ToySpec{};
    toy.modes.clear();
    toy.weights.clear();
    CHECK_THROWS_AS(toy.validate(), DomainError);

    SceneTokenConfig tok;
    CHECK_NOTHROW(tok.validate());
    tok.latent_h = 0;
    CHECK_THROWS_AS(tok.validate(), DomainError);
    tok = SceneTokenConfig{};
    tok.blur_radius = -1;
    CHECK_THROWS_AS(tok.validate(), DomainError);
    tok = SceneTokenConfig{};
    tok.fg_threshold = 1.5;
    CHECK_THROWS_AS(tok.validate(), DomainError);

    TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    tc.steps = 0;
    CHECK_THROWS_AS(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.lr = 0.0;
    CHECK_THROWS_AS(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.momentum = 1.0;
    CHECK_THROWS_AS(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.stage = 3;
    CHECK_THROWS_AS(tc.validate(), DomainError);
    tc = TrainConfig{};
    tc.est_hidden = 0;
    CHECK_THROWS_AS(tc.validate(), DomainError);
}

TEST_CASE("velocity net init: layout, f32 storage, gains, zero biases") {
    NetConfig cfg;
    cfg.channels = 3;
    cfg.dim = 8;
    cfg.blocks = 2;
    VelocityNet net = VelocityNet::init(cfg, 55);
    CHECK(net.theta.size() == net.layout.total);
    CHECK(net.input_channels() == 7);

    VelocityNet again = VelocityNet::init(cfg, 55);
    CHECK(net.theta == again.theta);
    VelocityNet other = VelocityNet::init(cfg, 56);
    CHECK(net.theta != other.theta);

    // Every stored value is exactly representable in 32-bit float.
    for (double v : net.theta)
        CHECK(v == static_cast<double>(static_cast<float>(v)));

    // Layernorm gains start at one, every bias at zero.
    for (const ParamLayout::Segment& seg : net.layout.segments) {
        const bool is_gain = seg.name.size() >= 2 && seg.name.rfind(".g") == seg.name.size() - 2;
        const bool is_bias =
            (seg.name.rfind(".b") != std::string::npos &&
             seg.name.rfind(".b") >= seg.name.size() - 3);
        for (size_t i = 0; i < seg.count; ++i) {
            const double v = net.theta[seg.offset + i];
            if (is_gain) CHECK(v == 1.0);
            if (is_bias) CHECK(v == 0.0);
        }
    }

    // The head is deliberately small next to the embedding map.
    double head_rms = 0.0, embed_rms = 0.0;
    const ParamLayout::Segment& head = net.layout.find("head.w");
    const ParamLayout::Segment& embed = net.layout.find("embed.w");
    for (size_t i = 0; i < head.count; ++i)
        head_rms += net.theta[head.offset + i] * net.theta[head.offset + i];
    for (size_t i = 0; i < embed.count; ++i)
        embed_rms += net.theta[embed.offset + i] * net.theta[embed.offset + i];
    head_rms = std::sqrt(head_rms / static_cast<double>(head.count));
    embed_rms = std::sqrt(embed_rms / static_cast<double>(embed.count));
    CHECK(head_rms < 0.3 * embed_rms);
}

TEST_CASE("quantize_f32 rounds through float and is idempotent") {
    std::vector<double> v{0.1, 1.0, -2.5, 1e-40, 3.14159265358979};
    quantize_f32(v);
    CHECK(v[0] == static_cast<double>(0.1f));
    CHECK(v[1] == 1.0);
    CHECK(v[2] == -2.5);
    CHECK(v[4] == static_cast<double>(3.14159265358979f));
    std::vector<double> w = v;
    quantize_f32(w);
    CHECK(v == w);
}

TEST_CASE("named round trip and checkpoint file round trip are bit exact") {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.dim = 6;
    cfg.blocks = 2;
    cfg.lambda = 3.5;
    VelocityNet net = VelocityNet::init(cfg, 9);
    VelocityNet back = VelocityNet::from_named(net.to_named());
    CHECK(back.cfg.channels == cfg.channels);
    CHECK(back.cfg.dim == cfg.dim);
    CHECK(back.cfg.blocks == cfg.blocks);
    CHECK(back.cfg.lambda == cfg.lambda);
    REQUIRE(back.theta.size() == net.theta.size());
    for (size_t i = 0; i < net.theta.size(); ++i) CHECK(bit_equal(back.theta[i], net.theta[i]));

    EstimatorParams est = EstimatorParams::init(3, 4, 17);
    {
        std::vector<double> flat = est.flatten();
        quantize_f32(flat);
        est.unflatten(flat);
    }
    TempDir tmp;
    save_model(tmp.file("model.ckpt"), net, est);
    ModelBundle b = load_model(tmp.file("model.ckpt"));
    REQUIRE(b.net.theta.size() == net.theta.size());
    for (size_t i = 0; i < net.theta.size(); ++i)
        CHECK(bit_equal(b.net.theta[i], net.theta[i]));
    const std::vector<double> ef = est.flatten(), lf = b.est.flatten();
    REQUIRE(ef.size() == lf.size());
    for (size_t i = 0; i < ef.size(); ++i) CHECK(bit_equal(ef[i], lf[i]));
    CHECK(bit_equal(b.est.lambda1_raw, est.lambda1_raw));
    CHECK(bit_equal(b.est.lambda2_raw, est.lambda2_raw));
}

TEST_CASE("net_forward validates shapes and parameter ranges") {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.dim = 4;
    VelocityNet net = VelocityNet::init(cfg, 1);
    const Tensor x_t({3, 2}), x_warp({3, 2}), c({3});
    const std::vector<double> fg(3, 0.0);

    CHECK_NOTHROW(net_forward(net, x_t, x_warp, c, 0.5, fg, 0.2));
    CHECK_THROWS_AS(net_forward(net, Tensor({3, 3}), x_warp, c, 0.5, fg, 0.2), DimensionError);
    CHECK_THROWS_AS(net_forward(net, x_t, Tensor({4, 2}), c, 0.5, fg, 0.2), DimensionError);
    CHECK_THROWS_AS(net_forward(net, x_t, x_warp, Tensor({4}), 0.5, fg, 0.2), DimensionError);
    CHECK_THROWS_AS(net_forward(net, x_t, x_warp, c, 0.5, {0.0, 1.0}, 0.2), DimensionError);
    CHECK_THROWS_AS(net_forward(net, x_t, x_warp, c, 0.5, fg, -0.1), DomainError);
    CHECK_THROWS_AS(net_forward(net, x_t, x_warp, c, 0.5, fg, 1.1), DomainError);
    CHECK_THROWS_AS(net_forward(net, x_t, x_warp, c, std::nan(""), fg, 0.2), DomainError);
}

TEST_CASE("net_forward matches the documented pipeline composed from primitives") {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.dim = 6;
    cfg.blocks = 2;
    cfg.lambda = 2.0;
    VelocityNet net = VelocityNet::init(cfg, 33);
    const int s = 5, d = cfg.dim, ch = cfg.channels, cin = 2 * ch + 1, f = 4 * d;

    Rng rng(8);
    Tensor x_t({s, ch}), x_warp({s, ch}), c({s});
    for (size_t i = 0; i < x_t.size(); ++i) x_t[i] = rng.normal();
    for (size_t i = 0; i < x_warp.size(); ++i) x_warp[i] = rng.normal();
    for (size_t i = 0; i < c.size(); ++i) c[i] = rng.uniform();
    const std::vector<double> fg{1, 0, 1, 0, 0};
    const double t = 0.37, alpha = 0.25;

    NetTrace trace;
    const Tensor out = net_forward(net, x_t, x_warp, c, t, fg, alpha, &trace);
    REQUIRE(out.dim(0) == s);
    REQUIRE(out.dim(1) == ch);

    // Reference path built from the public primitives and segment names.
    std::vector<double> xin(static_cast<size_t>(s) * cin);
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < ch; ++j) xin[static_cast<size_t>(i) * cin + j] = x_t.at(i, j);
        for (int j = 0; j < ch; ++j) xin[static_cast<size_t>(i) * cin + ch + j] = x_warp.at(i, j);
        xin[static_cast<size_t>(i) * cin + 2 * ch] = c[static_cast<size_t>(i)];
    }
    std::vector<double> h(static_cast<size_t>(s) * d);
    linear_fwd(xin.data(), s, cin, net.seg("embed.w"), net.seg("embed.b"), d, h.data());
    // Sinusoidal time features: trust the trace (its exact frequencies are an
    // implementation detail), but require the canonical layout sin/cos pairs.
    REQUIRE(trace.tfeat.size() == static_cast<size_t>(kTimeFeatures));
    for (int k = 0; k + 1 < kTimeFeatures; k += 2)
        CHECK(trace.tfeat[static_cast<size_t>(k)] * trace.tfeat[static_cast<size_t>(k)] +
                  trace.tfeat[static_cast<size_t>(k + 1)] *
                      trace.tfeat[static_cast<size_t>(k + 1)] ==
              doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> te(static_cast<size_t>(d));
    linear_fwd(trace.tfeat.data(), 1, kTimeFeatures, net.seg("time.w"), net.seg("time.b"), d,
               te.data());
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < d; ++j) h[static_cast<size_t>(i) * d + j] += te[static_cast<size_t>(j)];

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "blk" + std::to_string(b) + ".";
        std::vector<double> ln(h.size()), mean(s), rstd(s);
        layernorm_fwd(h.data(), s, d, net.seg(p + "ln1.g"), net.seg(p + "ln1.b"), ln.data(),
                      mean.data(), rstd.data());
        std::vector<double> ay(h.size());
        AttnCache cache;
        twopath_attn_fwd(ln.data(), s, d, net.seg(p + "attn.wq"), net.seg(p + "attn.wk"),
                         net.seg(p + "attn.wv"), net.seg(p + "attn.wo"), fg.data(), cfg.lambda,
                         alpha, ay.data(), cache);
        for (size_t i = 0; i < h.size(); ++i) h[i] += ay[i];

        std::vector<double> ln2(h.size());
        layernorm_fwd(h.data(), s, d, net.seg(p + "ln2.g"), net.seg(p + "ln2.b"), ln2.data(),
                      mean.data(), rstd.data());
        std::vector<double> z1(static_cast<size_t>(s) * f), a1(static_cast<size_t>(s) * f);
        linear_fwd(ln2.data(), s, d, net.seg(p + "ffn.w1"), net.seg(p + "ffn.b1"), f, z1.data());
        tanh_fwd(z1.data(), z1.size(), a1.data());
        std::vector<double> y2(h.size());
        linear_fwd(a1.data(), s, f, net.seg(p + "ffn.w2"), net.seg(p + "ffn.b2"), d, y2.data());
        for (size_t i = 0; i < h.size(); ++i) h[i] += y2[i];
    }
    std::vector<double> lnf(h.size()), mean(s), rstd(s);
    layernorm_fwd(h.data(), s, d, net.seg("final_ln.g"), net.seg("final_ln.b"), lnf.data(),
                  mean.data(), rstd.data());
    std::vector<double> want(static_cast<size_t>(s) * ch);
    linear_fwd(lnf.data(), s, d, net.seg("head.w"), net.seg("head.b"), ch, want.data());

    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("a zeroed net predicts zero velocity and the sampler returns x0") {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.dim = 4;
    VelocityNet net = VelocityNet::init(cfg, 3);
    std::fill(net.theta.begin(), net.theta.end(), 0.0);

    Tensor x_t({2, 2}), x_warp({2, 2}), c({2});
    x_t[0] = 1.0;
    x_t[3] = -2.0;
    const std::vector<double> fg{0.0, 1.0};
    const Tensor v = net_forward(net, x_t, x_warp, c, 0.4, fg, 0.5);
    for (size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 0.0);

    FlowElem e;
    e.x_warp = Tensor({2, 2});
    e.c = Tensor({2});
    e.fg.assign(2, 0.0);
    Tensor x0({2, 2});
    x0[0] = 0.3;
    x0[1] = -1.1;
    x0[2] = 0.0;
    x0[3] = 2.2;
    const Tensor xT =
        generate_element(net, e, x0, NoiseScheduleConfig{}, VelocityMode::Plain, 0.0, 6);
    for (size_t i = 0; i < x0.size(); ++i) CHECK(xT[i] == x0[i]);
}

TEST_CASE("draw_flow_point stores schedule-consistent fields bit for bit") {
    const NoiseScheduleConfig sched;
    Rng rng(71);
    FlowElem e;
    e.x1 = Tensor({4, 2});
    for (size_t i = 0; i < e.x1.size(); ++i) e.x1[i] = rng.normal();
    e.x_warp = Tensor({4, 2});
    e.c = Tensor({4});
    for (size_t i = 0; i < e.c.size(); ++i) e.c[i] = rng.uniform();
    e.fg.assign(4, 0.0);
    e.m_geo_lat = Tensor({4});

    draw_flow_point(e, sched, VelocityMode::ScheduleConsistent, rng);
    CHECK(e.t >= 0.0);
    CHECK(e.t < 1.0);
    REQUIRE(e.x0.dim(0) == 4);
    REQUIRE(e.x0.dim(1) == 2);

    const Tensor sigma = sigma_map(e.c, e.t, sched);
    REQUIRE(sigma.size() == e.sigma_t.size());
    for (size_t i = 0; i < sigma.size(); ++i) CHECK(bit_equal(sigma[i], e.sigma_t[i]));
    const Tensor xt = flow_state(e.x0, e.x1, e.sigma_t);
    for (size_t i = 0; i < xt.size(); ++i) CHECK(bit_equal(xt[i], e.x_t[i]));
    const Tensor vt =
        velocity_target(e.x0, e.x1, e.c, sched, VelocityMode::ScheduleConsistent);
    for (size_t i = 0; i < vt.size(); ++i) CHECK(bit_equal(vt[i], e.v_target[i]));
}

TEST_CASE("toy sampler hits the mixture weights and mode spread") {
    ToySpec spec;
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) {
        const std::array<double, 2> pa = sample_toy(spec, a);
        const std::array<double, 2> pb = sample_toy(spec, b);
        CHECK(bit_equal(pa[0], pb[0]));
        CHECK(bit_equal(pa[1], pb[1]));
    }

    Rng rng(123);
    int left = 0;
    const int n = 20000;
    double y_var = 0.0;
    for (int i = 0; i < n; ++i) {
        const std::array<double, 2> p = sample_toy(spec, rng);
        if (p[0] < 0.0) ++left;
        // Every draw lies close to one of the two modes.
        CHECK(std::min(std::abs(p[0] + 6.0), std::abs(p[0] - 6.0)) < 6.0 * spec.sigma);
        y_var += p[1] * p[1];
    }
    CHECK(static_cast<double>(left) / n == doctest::Approx(0.7).epsilon(0.03));
    CHECK(y_var / n == doctest::Approx(spec.sigma * spec.sigma).epsilon(0.08));
}

TEST_CASE("toy elements are single zero-conditioned tokens") {
    Rng rng(9);
    const FlowElem e = make_toy_elem(ToySpec{}, NoiseScheduleConfig{}, VelocityMode::Plain, rng);
    REQUIRE(e.x1.dim(0) == 1);
    REQUIRE(e.x1.dim(1) == 2);
    CHECK(e.x_warp[0] == 0.0);
    CHECK(e.x_warp[1] == 0.0);
    CHECK(e.c[0] == 0.0);
    CHECK(e.fg.size() == 1);
    CHECK(e.fg[0] == 0.0);
    CHECK(e.lat_h == 0);
    CHECK(!e.has_aux());
    CHECK(e.x_t.size() == 2);
    CHECK(e.v_target.size() == 2);
    // Plain mode with c = 0: the target velocity is exactly x1 - x0.
    for (size_t i = 0; i < 2; ++i) CHECK(bit_equal(e.v_target[i], e.x1[i] - e.x0[i]));
}

TEST_CASE("scene tokenization produces a consistent latent element") {
    const SceneSample& s = tiny_sample();
    const SceneTokenConfig tok = tiny_tokens();
    const FlowElem e = scene_frame_elem(s, 1, tok);
    const int S = tok.latent_h * tok.latent_w;

    REQUIRE(e.x1.dim(0) == S);
    REQUIRE(e.x1.dim(1) == 3);
    REQUIRE(e.x_warp.dim(0) == S);
    REQUIRE(static_cast<int>(e.c.size()) == S);
    REQUIRE(static_cast<int>(e.fg.size()) == S);
    REQUIRE(static_cast<int>(e.m_geo_lat.size()) == S);
    CHECK(e.lat_h == tok.latent_h);
    CHECK(e.lat_w == tok.latent_w);
    CHECK(e.has_aux());
    CHECK(e.x_gt_img.dim(0) == 48);
    CHECK(e.x_gt_img.dim(1) == 84);
    CHECK(e.m_geo_img.ndim() == 2);
    CHECK(e.z_warp_lat.dim(0) == tok.latent_h);

    // The target tokens are exactly the area-resized target view.
    const Tensor want = area_resize(s.frames_b.frame(1), tok.latent_h, tok.latent_w);
    for (size_t i = 0; i < e.x1.size(); ++i) CHECK(bit_equal(e.x1[i], want[i]));

    int n_fg = 0;
    for (int i = 0; i < S; ++i) {
        CHECK((e.fg[static_cast<size_t>(i)] == 0.0 || e.fg[static_cast<size_t>(i)] == 1.0));
        n_fg += e.fg[static_cast<size_t>(i)] == 1.0 ? 1 : 0;
        CHECK(e.m_geo_lat[static_cast<size_t>(i)] >= 0.0);
        CHECK(e.m_geo_lat[static_cast<size_t>(i)] <= 1.0);
        CHECK(e.c[static_cast<size_t>(i)] >= 0.0);
        CHECK(e.c[static_cast<size_t>(i)] <= 1.0);
    }
    CHECK(n_fg > 0);   // the articulated body is visible
    CHECK(n_fg < S);   // and does not swallow the background

    CHECK_THROWS_AS(scene_frame_elem(s, 2, tok), DomainError);
    CHECK_THROWS_AS(scene_frame_elem(s, -1, tok), DomainError);
}

TEST_CASE("scene pools enumerate sample x frame deterministically") {
    GenConfig gen;
    gen.n_frames = 2;
    gen.height = 48;
    gen.width = 84;
    gen.min_links = 3;
    gen.max_links = 3;
    gen.step_fraction = 0.05;
    const SceneTokenConfig tok = tiny_tokens();

    const std::vector<FlowElem> pool = build_scene_pool(gen, tok, 2, 777);
    REQUIRE(pool.size() == 4);
    const std::vector<FlowElem> again = build_scene_pool(gen, tok, 2, 777);
    for (size_t k = 0; k < pool.size(); ++k)
        for (size_t i = 0; i < pool[k].x1.size(); ++i)
            CHECK(bit_equal(pool[k].x1[i], again[k].x1[i]));

    // Different seed, different scenes.
    const std::vector<FlowElem> other = build_scene_pool(gen, tok, 1, 778);
    bool any_diff = false;
    for (size_t i = 0; i < other[0].x1.size(); ++i)
        any_diff = any_diff || other[0].x1[i] != pool[0].x1[i];
    CHECK(any_diff);

    CHECK_THROWS_AS(build_scene_pool(gen, tok, 0, 1), DomainError);
}

TEST_CASE("loss: flow-matching term equals the direct residual computation") {
    const NoiseScheduleConfig sched;
    NetConfig cfg;
    cfg.channels = 2;
    cfg.dim = 6;
    VelocityNet net = VelocityNet::init(cfg, 12);
    EstimatorParams est = EstimatorParams::init(3, 4, 13);

    Rng rng(500);
    FlowBatch batch;
    for (int i = 0; i < 3; ++i)
        batch.elems.push_back(make_toy_elem(ToySpec{}, sched, VelocityMode::Plain, rng));
    const double alpha = 0.3;
    const LossResult r = loss(net, est, batch, alpha);

    size_t n_total = 0;
    double want = 0.0;
    for (const FlowElem& e : batch.elems) {
        const Tensor v = net_forward(net, e.x_t, e.x_warp, e.c, e.t, e.fg, alpha);
        for (size_t i = 0; i < v.size(); ++i) {
            const double d = v[i] - e.v_target[i];
            want += d * d;
        }
        n_total += v.size();
    }
    want /= static_cast<double>(n_total);
    CHECK(r.fm == doctest::Approx(want).epsilon(1e-12));
    CHECK(r.aux == 0.0);  // toy elements carry no auxiliary images
    CHECK(r.total == doctest::Approx(r.fm).epsilon(1e-12));
    CHECK(r.dtheta.size() == net.theta.size());

    CHECK_THROWS_AS(loss(net, est, FlowBatch{}, alpha), DomainError);
}

TEST_CASE("loss: auxiliary term equals the per-element estimator objective") {
    const SceneSample& s = tiny_sample();
    SceneTokenConfig tok = tiny_tokens();
    NetConfig cfg;
    cfg.channels = 3;
    cfg.dim = 6;
    VelocityNet net = VelocityNet::init(cfg, 21);
    EstimatorParams est = EstimatorParams::init(4, 4, 22);

    const NoiseScheduleConfig sched;
    Rng rng(501);
    FlowBatch batch;
    for (int f = 0; f < 2; ++f) {
        FlowElem e = scene_frame_elem(s, f, tok);
        draw_flow_point(e, sched, VelocityMode::Plain, rng);
        batch.elems.push_back(std::move(e));
    }
    const LossResult r = loss(net, est, batch, 0.2);

    double want_aux = 0.0;
    for (const FlowElem& e : batch.elems) {
        const Tensor c_est = estimate_confidence(e.z_warp_lat, e.m_geo_aux, est);
        const AuxLossResult ar = aux_loss(c_est, e.m_geo_img, e.x_gt_img, e.x_warp_img, est);
        want_aux += ar.loss / (static_cast<double>(c_est.size()) * 2.0);
    }
    CHECK(r.aux == doctest::Approx(want_aux).epsilon(1e-12));
    CHECK(r.aux > 0.0);
    CHECK(r.total == doctest::Approx(r.fm + r.aux).epsilon(1e-12));
}

TEST_CASE("loss gradients pass spot finite differences on both parameter sets") {
    const SceneSample& s = tiny_sample();
    SceneTokenConfig tok;
    tok.latent_h = 4;
    tok.latent_w = 6;
    NetConfig cfg;
    cfg.channels = 3;
    cfg.dim = 6;
    VelocityNet net = VelocityNet::init(cfg, 31);
    EstimatorParams est = EstimatorParams::init(4, 3, 32);
    {
        std::vector<double> flat = est.flatten();
        quantize_f32(flat);
        est.unflatten(flat);
    }

    const NoiseScheduleConfig sched;
    Rng rng(502);
    FlowBatch batch;
    for (int f = 0; f < 2; ++f) {
        FlowElem e = scene_frame_elem(s, f, tok);
        draw_flow_point(e, sched, VelocityMode::ScheduleConsistent, rng);
        batch.elems.push_back(std::move(e));
    }
    const double alpha = 0.4;
    const LossResult r = loss(net, est, batch, alpha);

    // Random subset of the network parameters.
    Rng pick(77);
    double worst_net = 0.0;
    for (int k = 0; k < 24; ++k) {
        const size_t i = pick.uniform_int(net.theta.size());
        const double saved = net.theta[i];
        const double eps = 1e-5 * std::max(1.0, std::abs(saved));
        net.theta[i] = saved + eps;
        const double up = loss(net, est, batch, alpha).total;
        net.theta[i] = saved - eps;
        const double dn = loss(net, est, batch, alpha).total;
        net.theta[i] = saved;
        const double fd = (up - dn) / (2.0 * eps);
        worst_net = std::max(worst_net, rel_err(fd, r.dtheta[i]));
    }
    CHECK(worst_net < 1e-3);

    // Random subset of the estimator parameters, via the flat view.
    std::vector<double> flat = est.flatten();
    const std::vector<double> dflat = r.dest.flatten();
    double worst_est = 0.0;
    for (int k = 0; k < 16; ++k) {
        const size_t i = pick.uniform_int(flat.size());
        const double saved = flat[i];
        const double eps = 1e-5 * std::max(1.0, std::abs(saved));
        flat[i] = saved + eps;
        est.unflatten(flat);
        const double up = loss(net, est, batch, alpha).total;
        flat[i] = saved - eps;
        est.unflatten(flat);
        const double dn = loss(net, est, batch, alpha).total;
        flat[i] = saved;
        est.unflatten(flat);
        const double fd = (up - dn) / (2.0 * eps);
        worst_est = std::max(worst_est, rel_err(fd, dflat[i]));
    }
    CHECK(worst_est < 1e-4);
}

TEST_CASE("training is deterministic and quantizes every step") {
    TrainConfig tc;
    tc.steps = 6;
    tc.batch_size = 2;
    tc.lr = 0.02;
    tc.momentum = 0.9;
    tc.seed = 41;
    tc.net.channels = 2;
    tc.net.dim = 4;
    tc.net.blocks = 1;
    tc.fusion = FusionSchedule{0.5, 4};

    const BatchSource src = make_toy_source(ToySpec{});
    const TrainResult a = train(tc, src);
    const TrainResult b = train(tc, src);
    REQUIRE(a.net.theta.size() == b.net.theta.size());
    for (size_t i = 0; i < a.net.theta.size(); ++i)
        CHECK(bit_equal(a.net.theta[i], b.net.theta[i]));
    CHECK(a.est.flatten() == b.est.flatten());

    REQUIRE(a.curve.size() == 6);
    for (size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].step == static_cast<int64_t>(i));
        CHECK(a.curve[i].alpha ==
              doctest::Approx(alpha_schedule(static_cast<int64_t>(i), tc.fusion)).epsilon(1e-12));
        CHECK(std::isfinite(a.curve[i].fm));
    }
    for (double v : a.net.theta) CHECK(v == static_cast<double>(static_cast<float>(v)));

    // The run actually moved the parameters.
    const VelocityNet fresh =
        VelocityNet::init(tc.net, Rng(tc.seed).stream("init").next_u64());
    CHECK(a.net.theta != fresh.theta);
}

TEST_CASE("stage 2 freezes the attention weights and nothing else") {
    TrainConfig tc;
    tc.steps = 5;
    tc.batch_size = 2;
    tc.lr = 0.05;
    tc.seed = 42;
    tc.stage = 2;
    tc.net.channels = 2;
    tc.net.dim = 4;
    tc.net.blocks = 2;

    const TrainResult r = train(tc, make_toy_source(ToySpec{}));
    const VelocityNet fresh =
        VelocityNet::init(tc.net, Rng(tc.seed).stream("init").next_u64());
    bool other_moved = false;
    for (const ParamLayout::Segment& seg : r.net.layout.segments) {
        const bool frozen = seg.name.find(".attn.") != std::string::npos;
        for (size_t i = 0; i < seg.count; ++i) {
            const double now = r.net.theta[seg.offset + i];
            const double was = fresh.theta[seg.offset + i];
            if (frozen) {
                CHECK(bit_equal(now, was));
            } else if (now != was) {
                other_moved = true;
            }
        }
    }
    CHECK(other_moved);
}

TEST_CASE("loss curves serialize as a plain csv") {
    TempDir tmp;
    std::vector<LossRow> curve{{0, 1.5, 0.25, 0.0}, {1, 1.25, 0.2, 0.1}};
    write_loss_csv(tmp.file("loss.csv"), curve);
    std::ifstream in(tmp.file("loss.csv"));
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,fm_loss,aux_loss,alpha");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);

    CHECK_THROWS_AS(write_loss_csv("/nonexistent-dir/loss.csv", curve), IoError);
}

TEST_CASE("toy point sampling is deterministic with the documented layout") {
    NetConfig cfg;
    cfg.channels = 2;
    cfg.dim = 4;
    VelocityNet net = VelocityNet::init(cfg, 61);
    const NoiseScheduleConfig sched;

    const Tensor p1 = sample_toy_points(net, ToySpec{}, 8, 4, sched, VelocityMode::Plain, 99);
    const Tensor p2 = sample_toy_points(net, ToySpec{}, 8, 4, sched, VelocityMode::Plain, 99);
    REQUIRE(p1.dim(0) == 8);
    REQUIRE(p1.dim(1) == 2);
    for (size_t i = 0; i < p1.size(); ++i) CHECK(bit_equal(p1[i], p2[i]));
    const Tensor p3 = sample_toy_points(net, ToySpec{}, 8, 4, sched, VelocityMode::Plain, 100);
    bool diff = false;
    for (size_t i = 0; i < p1.size(); ++i) diff = diff || p1[i] != p3[i];
    CHECK(diff);

    CHECK_THROWS_AS(sample_toy_points(net, ToySpec{}, 0, 4, sched, VelocityMode::Plain, 1),
                    DomainError);
}

TEST_CASE("toy_mode_weights splits on the sign of x") {
    Tensor pts({4, 2});
    pts.at(0, 0) = -3.0;
    pts.at(1, 0) = 5.0;
    pts.at(2, 0) = -0.1;
    pts.at(3, 0) = 0.0;  // boundary counts as the right mode
    const std::array<double, 2> w = toy_mode_weights(pts);
    CHECK(w[0] == 0.5);
    CHECK(w[1] == 0.5);
    CHECK_THROWS_AS(toy_mode_weights(Tensor({4, 3})), DimensionError);
    CHECK_THROWS_AS(toy_mode_weights(Tensor({4})), DimensionError);
}

TEST_CASE("evaluate partitions sites by latent occupancy and is deterministic") {
    const SceneSample& s = tiny_sample();
    const SceneTokenConfig tok = tiny_tokens();
    std::vector<FlowElem> elems;
    for (int f = 0; f < 2; ++f) elems.push_back(scene_frame_elem(s, f, tok));

    NetConfig cfg;
    cfg.channels = 3;
    cfg.dim = 6;
    VelocityNet net = VelocityNet::init(cfg, 71);
    const NoiseScheduleConfig sched;

    const EvalResult a = evaluate(net, elems, sched, VelocityMode::Plain, 0.2, 5, 11);
    const EvalResult b = evaluate(net, elems, sched, VelocityMode::Plain, 0.2, 5, 11);
    CHECK(a.n_elems == 2);
    CHECK(a.n_holes + a.n_covered == 2 * tok.latent_h * tok.latent_w);
    CHECK(a.n_holes > 0);
    CHECK(a.n_covered > 0);
    CHECK(std::isfinite(a.psnr));
    CHECK(a.ssim > -1.0);
    CHECK(a.ssim < 1.0);
    CHECK(a.mse_holes > 0.0);
    CHECK(a.mse_covered > 0.0);
    CHECK(bit_equal(a.mse_holes, b.mse_holes));
    CHECK(bit_equal(a.psnr, b.psnr));

    // Hole/covered MSEs average the per-site squared error over channels, so
    // together they recover the overall latent MSE.
    double sse = 0.0;
    const Rng root = Rng(11).stream("eval");
    for (size_t idx = 0; idx < elems.size(); ++idx) {
        Rng rng = root.stream(idx);
        Tensor x0({tok.latent_h * tok.latent_w, 3});
        for (size_t i = 0; i < x0.size(); ++i) x0[i] = rng.normal();
        const Tensor gen =
            generate_element(net, elems[idx], x0, sched, VelocityMode::Plain, 0.2, 5);
        for (size_t i = 0; i < gen.size(); ++i) {
            const double d = gen[i] - elems[idx].x1[i];
            sse += d * d;
        }
    }
    const double overall =
        (a.mse_holes * static_cast<double>(a.n_holes) +
         a.mse_covered * static_cast<double>(a.n_covered)) *
        3.0;
    CHECK(overall == doctest::Approx(sse).epsilon(1e-9));

    // Toy elements carry no latent grid.
    Rng trng(1);
    std::vector<FlowElem> toy{
        make_toy_elem(ToySpec{}, sched, VelocityMode::Plain, trng)};
    NetConfig tcfg;
    tcfg.channels = 2;
    tcfg.dim = 4;
    const VelocityNet tnet = VelocityNet::init(tcfg, 2);
    CHECK_THROWS_AS(evaluate(tnet, toy, sched, VelocityMode::Plain, 0.0, 3, 1), DimensionError);
    CHECK_THROWS_AS(evaluate(net, {}, sched, VelocityMode::Plain, 0.0, 3, 1), DomainError);
}

TEST_CASE("batch sources honor batch size, ablation flag, and the pool") {
    TrainConfig tc;
    tc.batch_size = 3;
    tc.net.channels = 2;
    Rng rng(1);
    const FlowBatch toy = make_toy_source(ToySpec{})(tc, 0, rng);
    CHECK(toy.elems.size() == 3);

    const SceneSample& s = tiny_sample();
    const SceneTokenConfig tok = tiny_tokens();
    std::vector<FlowElem> pool;
    for (int f = 0; f < 2; ++f) pool.push_back(scene_frame_elem(s, f, tok));

    TrainConfig sc;
    sc.batch_size = 4;
    sc.net.channels = 3;
    const BatchSource src = make_scene_source(pool);
    Rng r2(2);
    const FlowBatch sb = src(sc, 0, r2);
    CHECK(sb.elems.size() == 4);
    for (const FlowElem& e : sb.elems) {
        CHECK(e.x_t.size() == e.x1.size());
        bool c_nonzero = false;
        for (size_t i = 0; i < e.c.size(); ++i) c_nonzero = c_nonzero || e.c[i] != 0.0;
        CHECK(c_nonzero);
    }

    sc.zero_confidence = true;
    Rng r3(2);
    const FlowBatch zb = src(sc, 0, r3);
    for (const FlowElem& e : zb.elems)
        for (size_t i = 0; i < e.c.size(); ++i) CHECK(e.c[i] == 0.0);

    CHECK_THROWS_AS(make_scene_source({}), DomainError);
}
