#include "warp4d/confidence.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "warp4d/rng.hpp"

namespace warp4d {

namespace {

constexpr uint64_t kProjectionSeed = 0x4FEA7D5EEDull;

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

Tensor heuristic_confidence(const Tensor& m_geo, int blur_radius, int out_h, int out_w) {
    if (m_geo.ndim() != 2) throw DimensionError("heuristic_confidence: mask must be (H,W)");
    return area_resize(box_blur(m_geo, blur_radius), out_h, out_w);
}

const std::vector<double>& feature_projection(int in_ch) {
    static std::mutex mu;
    static std::map<int, std::vector<double>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(in_ch);
    if (it != cache.end()) return it->second;
    const int rows = 3 * in_ch;
    Rng rng = Rng(kProjectionSeed).stream(static_cast<uint64_t>(in_ch));
    std::vector<double> p(static_cast<size_t>(rows) * kFeatureChannels);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : p) v = rng.normal() * scale;
    return cache.emplace(in_ch, std::move(p)).first->second;
}

Tensor encode_features(const Tensor& x) {
    if (x.ndim() != 3) throw DimensionError("encode_features: expected (H,W,C)");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::vector<double>& proj = feature_projection(c);
    const double scale = 1.0 / std::sqrt(3.0);

    Tensor levels[3];
    levels[0] = x;
    for (int k = 1; k <= 2; ++k) {
        const int f = 1 << k;
        const int lh = std::max(1, (h + f - 1) / f), lw = std::max(1, (w + f - 1) / f);
        levels[k] = area_resize(area_resize(x, lh, lw), h, w);
    }

    Tensor out({h, w, kFeatureChannels});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int f = 0; f < kFeatureChannels; ++f) {
                double acc = 0.0;
                for (int l = 0; l < 3; ++l)
                    for (int i = 0; i < c; ++i)
                        acc += scale * levels[l].at(y, xx, i) *
                               proj[static_cast<size_t>(l * c + i) * kFeatureChannels + f];
                out.at(y, xx, f) = acc;
            }
    return out;
}

EstimatorParams EstimatorParams::init(int in_ch, int hidden, uint64_t seed) {
    if (in_ch < 1 || hidden < 1)
        throw DomainError("estimator: channel counts must be positive");
    EstimatorParams p;
    p.in_ch = in_ch;
    p.hidden = hidden;
    Rng rng = Rng(seed).stream("confidence-estimator");
    const double s1 = 1.0 / std::sqrt(9.0 * in_ch);
    const double s2 = 1.0 / std::sqrt(9.0 * hidden);
    p.w1.resize(static_cast<size_t>(hidden) * in_ch * 9);
    for (double& v : p.w1) v = rng.normal() * s1;
    p.b1.assign(static_cast<size_t>(hidden), 0.0);
    p.w2.resize(static_cast<size_t>(hidden) * 9);
    for (double& v : p.w2) v = rng.normal() * s2;
    p.b2.assign(1, 0.0);
    // softplus(ln(e-1)) = 1, so both loss coefficients start at weight 1.
    p.lambda1_raw = std::log(std::exp(1.0) - 1.0);
    p.lambda2_raw = p.lambda1_raw;
    return p;
}

EstimatorParams EstimatorParams::zeros_like() const {
    EstimatorParams g;
    g.in_ch = in_ch;
    g.hidden = hidden;
    g.w1.assign(w1.size(), 0.0);
    g.b1.assign(b1.size(), 0.0);
    g.w2.assign(w2.size(), 0.0);
    g.b2.assign(b2.size(), 0.0);
    g.lambda1_raw = 0.0;
    g.lambda2_raw = 0.0;
    return g;
}

size_t EstimatorParams::parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + 2;
}

std::vector<double> EstimatorParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    flat.insert(flat.end(), w1.begin(), w1.end());
    flat.insert(flat.end(), b1.begin(), b1.end());
    flat.insert(flat.end(), w2.begin(), w2.end());
    flat.insert(flat.end(), b2.begin(), b2.end());
    flat.push_back(lambda1_raw);
    flat.push_back(lambda2_raw);
    return flat;
}

void EstimatorParams::unflatten(const std::vector<double>& flat) {
    if (flat.size() != parameter_count())
        throw DimensionError("estimator: flat vector size mismatch");
    size_t o = 0;
    std::copy(flat.begin(), flat.begin() + static_cast<ptrdiff_t>(w1.size()), w1.begin());
    o += w1.size();
    std::copy(flat.begin() + static_cast<ptrdiff_t>(o),
              flat.begin() + static_cast<ptrdiff_t>(o + b1.size()), b1.begin());
    o += b1.size();
    std::copy(flat.begin() + static_cast<ptrdiff_t>(o),
              flat.begin() + static_cast<ptrdiff_t>(o + w2.size()), w2.begin());
    o += w2.size();
    std::copy(flat.begin() + static_cast<ptrdiff_t>(o),
              flat.begin() + static_cast<ptrdiff_t>(o + b2.size()), b2.begin());
    o += b2.size();
    lambda1_raw = flat[o];
    lambda2_raw = flat[o + 1];
}

std::vector<NamedTensor> EstimatorParams::to_named() const {
    return {
        {"est.w1", {hidden, in_ch, 3, 3}, w1},
        {"est.b1", {hidden}, b1},
        {"est.w2", {1, hidden, 3, 3}, w2},
        {"est.b2", {1}, b2},
        {"est.lambda1_raw", {1}, {lambda1_raw}},
        {"est.lambda2_raw", {1}, {lambda2_raw}},
    };
}

EstimatorParams EstimatorParams::from_named(const std::vector<NamedTensor>& named) {
    EstimatorParams p;
    for (const NamedTensor& t : named) {
        if (t.name == "est.w1") {
            if (t.shape.size() != 4) throw IoError("estimator: bad est.w1 shape");
            p.hidden = t.shape[0];
            p.in_ch = t.shape[1];
            p.w1 = t.data;
        } else if (t.name == "est.b1") {
            p.b1 = t.data;
        } else if (t.name == "est.w2") {
            p.w2 = t.data;
        } else if (t.name == "est.b2") {
            p.b2 = t.data;
        } else if (t.name == "est.lambda1_raw") {
            p.lambda1_raw = t.data.at(0);
        } else if (t.name == "est.lambda2_raw") {
            p.lambda2_raw = t.data.at(0);
        }
    }
    if (p.in_ch == 0 || p.w1.empty() || p.w2.empty() || p.b1.empty() || p.b2.empty())
        throw IoError("estimator: checkpoint is missing tensors");
    return p;
}

Tensor estimate_confidence(const Tensor& z_warp, const Tensor& m_geo,
                           const EstimatorParams& p, EstimatorTrace* trace) {
    if (z_warp.ndim() != 3) throw DimensionError("estimate_confidence: features must be (H,W,C)");
    if (m_geo.ndim() != 2 || m_geo.dim(0) != z_warp.dim(0) || m_geo.dim(1) != z_warp.dim(1))
        throw DimensionError("estimate_confidence: mask must be (H,W) matching the features");
    const int h = z_warp.dim(0), w = z_warp.dim(1), cz = z_warp.dim(2);
    if (cz + 1 != p.in_ch)
        throw DimensionError("estimate_confidence: estimator expects " +
                             std::to_string(p.in_ch) + " input channels, got " +
                             std::to_string(cz + 1));

    Tensor input({h, w, p.in_ch});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int i = 0; i < cz; ++i) input.at(y, x, i) = z_warp.at(y, x, i);
            input.at(y, x, cz) = m_geo.at(y, x);
        }

    // conv1 -> tanh
    Tensor act1({h, w, p.hidden});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < p.hidden; ++o) {
                double acc = p.b1[static_cast<size_t>(o)];
                for (int dy = -1; dy <= 1; ++dy) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = x + dx;
                        if (sx < 0 || sx >= w) continue;
                        for (int i = 0; i < p.in_ch; ++i)
                            acc += p.w1[((static_cast<size_t>(o) * p.in_ch + i) * 3 +
                                         (dy + 1)) *
                                            3 +
                                        (dx + 1)] *
                                   input.at(sy, sx, i);
                    }
                }
                act1.at(y, x, o) = std::tanh(acc);
            }

    // conv2 -> sigmoid
    Tensor c({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = p.b2[0];
            for (int dy = -1; dy <= 1; ++dy) {
                const int sy = y + dy;
                if (sy < 0 || sy >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sx = x + dx;
                    if (sx < 0 || sx >= w) continue;
                    for (int i = 0; i < p.hidden; ++i)
                        acc += p.w2[(static_cast<size_t>(i) * 3 + (dy + 1)) * 3 + (dx + 1)] *
                               act1.at(sy, sx, i);
                }
            }
            c.at(y, x) = 1.0 / (1.0 + std::exp(-acc));
        }

    if (trace != nullptr) {
        trace->input = input;
        trace->act1 = act1;
        trace->c = c;
    }
    return c;
}

void estimate_confidence_backward(const EstimatorParams& p, const EstimatorTrace& trace,
                                  const Tensor& dc, EstimatorParams& grads) {
    const int h = trace.c.dim(0), w = trace.c.dim(1);
    require_same_shape(dc, trace.c, "estimate_confidence_backward");

    // sigmoid backward, then conv2 backward into act1 grads and w2/b2.
    Tensor dact1({h, w, p.hidden});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double cv = trace.c.at(y, x);
            const double dpre2 = dc.at(y, x) * cv * (1.0 - cv);
            grads.b2[0] += dpre2;
            for (int dy = -1; dy <= 1; ++dy) {
                const int sy = y + dy;
                if (sy < 0 || sy >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sx = x + dx;
                    if (sx < 0 || sx >= w) continue;
                    for (int i = 0; i < p.hidden; ++i) {
                        const size_t wi = (static_cast<size_t>(i) * 3 + (dy + 1)) * 3 + (dx + 1);
                        grads.w2[wi] += dpre2 * trace.act1.at(sy, sx, i);
                        dact1.at(sy, sx, i) += dpre2 * p.w2[wi];
                    }
                }
            }
        }

    // tanh backward, then conv1 backward into w1/b1.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int o = 0; o < p.hidden; ++o) {
                const double a = trace.act1.at(y, x, o);
                const double dpre1 = dact1.at(y, x, o) * (1.0 - a * a);
                grads.b1[static_cast<size_t>(o)] += dpre1;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = x + dx;
                        if (sx < 0 || sx >= w) continue;
                        for (int i = 0; i < p.in_ch; ++i)
                            grads.w1[((static_cast<size_t>(o) * p.in_ch + i) * 3 + (dy + 1)) *
                                         3 +
                                     (dx + 1)] += dpre1 * trace.input.at(sy, sx, i);
                    }
                }
            }
}

AuxLossResult aux_loss(const Tensor& c, const Tensor& m_geo, const Tensor& x_gt,
                       const Tensor& x_warp, const EstimatorParams& p) {
    if (c.ndim() != 2) throw DimensionError("aux_loss: c must be (H',W')");
    if (m_geo.ndim() != 2) throw DimensionError("aux_loss: m_geo must be (H,W)");
    require_same_shape(x_gt, x_warp, "aux_loss");
    if (x_gt.ndim() != 3 || x_gt.dim(0) != m_geo.dim(0) || x_gt.dim(1) != m_geo.dim(1))
        throw DimensionError("aux_loss: frames must be (H,W,C) matching m_geo");

    const int gh = c.dim(0), gw = c.dim(1);
    const Tensor t_mask = bilinear_resize(m_geo, gh, gw);

    const Tensor f_gt = encode_features(x_gt);
    const Tensor f_warp = encode_features(x_warp);
    Tensor diff({x_gt.dim(0), x_gt.dim(1)});
    for (int y = 0; y < diff.dim(0); ++y)
        for (int x = 0; x < diff.dim(1); ++x) {
            double s = 0.0;
            for (int f = 0; f < kFeatureChannels; ++f)
                s += std::abs(f_gt.at(y, x, f) - f_warp.at(y, x, f));
            diff.at(y, x) = s / kFeatureChannels;
        }
    const Tensor t_feat = area_resize(diff, gh, gw);

    const double l1 = softplus(p.lambda1_raw);
    const double l2 = softplus(p.lambda2_raw);
    const double sig1 = 1.0 / (1.0 + std::exp(-p.lambda1_raw));
    const double sig2 = 1.0 / (1.0 + std::exp(-p.lambda2_raw));

    AuxLossResult r;
    r.dloss_dc = Tensor({gh, gw});
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            const double d1 = c.at(y, x) - t_mask.at(y, x);
            const double d2 = c.at(y, x) - t_feat.at(y, x);
            r.term_mask += d1 * d1;
            r.term_feature += d2 * d2;
            r.dloss_dc.at(y, x) = 2.0 * l1 * d1 + 2.0 * l2 * d2;
        }
    r.loss = l1 * r.term_mask + l2 * r.term_feature;
    r.dloss_dlambda1_raw = sig1 * r.term_mask;
    r.dloss_dlambda2_raw = sig2 * r.term_feature;
    return r;
}

}  // namespace warp4d
