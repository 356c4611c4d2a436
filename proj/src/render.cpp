#include "warp4d/render.hpp"

#include <cmath>
#include <limits>

#include "warp4d/rng.hpp"

namespace warp4d {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fixed world-space directional light (unit vector toward the light).
const Vec3 kLightDir = Vec3{0.45, 0.18, 0.88}.normalized();
constexpr double kAmbient = 0.45;
constexpr double kDiffuse = 0.55;

// Smallest positive entry parameter of the sphere |x - c| = r, or +inf.
double ray_sphere(const Vec3& ro, const Vec3& rd, const Vec3& c, double r) {
    const Vec3 oc = ro - c;
    const double a = rd.dot(rd);
    const double b = oc.dot(rd);
    const double cc = oc.dot(oc) - r * r;
    const double disc = b * b - a * cc;
    if (disc < 0.0) return kInf;
    const double t = (-b - std::sqrt(disc)) / a;
    return t > 0.0 ? t : kInf;
}

struct TextureWave {
    double fu, fv, phase;
};

// Three low-frequency waves per channel plus a per-channel base level,
// chosen so the color stays inside (0.1, 0.9) without clamping.
struct TextureSpec {
    double base[3];
    TextureWave waves[3][3];
};

TextureSpec make_texture(uint64_t seed) {
    Rng rng(seed);
    TextureSpec spec;
    for (int ch = 0; ch < 3; ++ch) {
        spec.base[ch] = rng.uniform(0.40, 0.60);
        for (int o = 0; o < 3; ++o) {
            const double f = rng.uniform(0.5, 1.8) * (o + 1);
            const double dir = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            spec.waves[ch][o] = {f * std::cos(dir), f * std::sin(dir),
                                 rng.uniform(0.0, 2.0 * 3.14159265358979323846)};
        }
    }
    return spec;
}

}  // namespace

std::vector<CapsulePrim> chain_capsules(const KinematicChain& chain,
                                        const std::vector<double>& angles) {
    const std::vector<Pose> poses = forward_kinematics(chain, angles);
    std::vector<CapsulePrim> prims;
    prims.reserve(poses.size());
    for (size_t i = 0; i < poses.size(); ++i) {
        const Link& l = chain.links[i];
        prims.push_back({poses[i].t, poses[i].apply({l.length, 0, 0}), l.radius, l.color});
    }
    return prims;
}

double ray_capsule(const Vec3& ro, const Vec3& rd, const CapsulePrim& cap, Vec3* normal) {
    double best = kInf;
    Vec3 n{};
    const Vec3 ba = cap.p1 - cap.p0;
    const double baba = ba.dot(ba);
    if (baba > 1e-18) {
        // Side wall of the finite cylinder. Entries through the flat disk
        // faces are always interior to a cap sphere, so the spheres below
        // account for them.
        const Vec3 oc = ro - cap.p0;
        const double bard = ba.dot(rd);
        const double baoc = ba.dot(oc);
        const double a = rd.dot(rd) * baba - bard * bard;
        const double b = oc.dot(rd) * baba - baoc * bard;
        const double c = oc.dot(oc) * baba - baoc * baoc - cap.radius * cap.radius * baba;
        if (a > 0.0) {
            const double disc = b * b - a * c;
            if (disc >= 0.0) {
                const double t = (-b - std::sqrt(disc)) / a;
                const double y = baoc + t * bard;
                if (t > 0.0 && y >= 0.0 && y <= baba && t < best) {
                    best = t;
                    const Vec3 p = ro + rd * t;
                    n = (p - cap.p0 - ba * (y / baba)) / cap.radius;
                }
            }
        }
    }
    const double t0 = ray_sphere(ro, rd, cap.p0, cap.radius);
    if (t0 < best) {
        best = t0;
        n = (ro + rd * t0 - cap.p0) / cap.radius;
    }
    const double t1 = ray_sphere(ro, rd, cap.p1, cap.radius);
    if (t1 < best) {
        best = t1;
        n = (ro + rd * t1 - cap.p1) / cap.radius;
    }
    if (normal != nullptr && best < kInf) *normal = n;
    return best;
}

Vec3 background_color(const BackgroundPlane& bg, const Vec3& point) {
    const TextureSpec spec = make_texture(bg.texture_seed);
    const Vec3 d = point - bg.point;
    const double s = d.dot(bg.tex_u);
    const double r = d.dot(bg.tex_v);
    Vec3 out{};
    double* ch[3] = {&out.x, &out.y, &out.z};
    for (int k = 0; k < 3; ++k) {
        double v = spec.base[k];
        const double amp[3] = {0.13, 0.065, 0.043};
        for (int o = 0; o < 3; ++o) {
            const TextureWave& w = spec.waves[k][o];
            v += amp[o] * std::sin(w.fu * s + w.fv * r + w.phase);
        }
        *ch[k] = v;
    }
    return out;
}

RenderResult render(const std::vector<CapsulePrim>& prims, const BackgroundPlane& bg,
                    const Camera& cam, int h, int w) {
    if (h <= 0 || w <= 0) throw DimensionError("render: non-positive frame size");
    cam.validate();
    RenderResult out;
    out.rgb = Tensor({h, w, 3});
    out.depth = Tensor({h, w});
    out.fg_mask = Tensor({h, w});
    const Vec3 ro = cam.camera_to_world({0, 0, 0});
    const Mat3 rt = cam.R.transposed();
    // Texture evaluation is hoisted out of background_color so the spec is
    // built once per frame, not per pixel.
    const TextureSpec spec = make_texture(bg.texture_seed);
    const double amp[3] = {0.13, 0.065, 0.043};

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // Camera-frame direction with unit z, so the ray parameter of a
            // hit equals its camera-frame depth exactly.
            const Vec3 d_cam = unproject(
                {{static_cast<double>(x), static_cast<double>(y)}, 1.0}, cam);
            const Vec3 rd = rt * d_cam;

            double best = kInf;
            int best_prim = -1;
            Vec3 best_n{};
            for (size_t i = 0; i < prims.size(); ++i) {
                Vec3 n;
                const double t = ray_capsule(ro, rd, prims[i], &n);
                if (t < best) {
                    best = t;
                    best_prim = static_cast<int>(i);
                    best_n = n;
                }
            }
            const double denom = rd.dot(bg.normal);
            if (std::abs(denom) > 1e-12) {
                const double t = (bg.point - ro).dot(bg.normal) / denom;
                if (t > 0.0 && t < best) {
                    best = t;
                    best_prim = -2;
                }
            }

            if (best_prim == -1) {
                out.rgb.at(y, x, 0) = 0.03;
                out.rgb.at(y, x, 1) = 0.03;
                out.rgb.at(y, x, 2) = 0.04;
                continue;
            }
            out.depth.at(y, x) = best;
            const Vec3 p = ro + rd * best;
            if (best_prim >= 0) {
                out.fg_mask.at(y, x) = 1.0;
                const double shade =
                    kAmbient + kDiffuse * std::max(0.0, best_n.dot(kLightDir));
                const Vec3 c = prims[static_cast<size_t>(best_prim)].color * shade;
                out.rgb.at(y, x, 0) = c.x;
                out.rgb.at(y, x, 1) = c.y;
                out.rgb.at(y, x, 2) = c.z;
            } else {
                const Vec3 d = p - bg.point;
                const double s = d.dot(bg.tex_u);
                const double r = d.dot(bg.tex_v);
                for (int k = 0; k < 3; ++k) {
                    double v = spec.base[k];
                    for (int o = 0; o < 3; ++o) {
                        const TextureWave& wv = spec.waves[k][o];
                        v += amp[o] * std::sin(wv.fu * s + wv.fv * r + wv.phase);
                    }
                    out.rgb.at(y, x, k) = v;
                }
            }
        }
    return out;
}

Tensor cross_view_visibility(const Tensor& depth_tgt, const Camera& tgt,
                             const Tensor& depth_src, const Camera& src, double rel_tol) {
    if (depth_tgt.ndim() != 2 || depth_src.ndim() != 2)
        throw DimensionError("cross_view_visibility: depth maps must be (H,W)");
    const int h = depth_tgt.dim(0), w = depth_tgt.dim(1);
    const int sh = depth_src.dim(0), sw = depth_src.dim(1);
    Tensor vis({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double z = depth_tgt.at(y, x);
            if (!(z > 0.0)) continue;
            const Vec3 p_world = tgt.camera_to_world(
                unproject({{static_cast<double>(x), static_cast<double>(y)}, z}, tgt));
            const Vec3 p_src = src.world_to_camera(p_world);
            if (!(p_src.z > 0.0)) continue;
            const Vec3 hom = src.K * p_src;
            const double ux = hom.x / hom.z, uy = hom.y / hom.z;
            const int x0 = static_cast<int>(std::floor(ux));
            const int y0 = static_cast<int>(std::floor(uy));
            bool visible = false;
            for (int dy = 0; dy <= 1 && !visible; ++dy)
                for (int dx = 0; dx <= 1 && !visible; ++dx) {
                    const int sx = x0 + dx, sy = y0 + dy;
                    if (sx < 0 || sx >= sw || sy < 0 || sy >= sh) continue;
                    const double ds = depth_src.at(sy, sx);
                    if (ds > 0.0 && std::abs(ds - p_src.z) <= rel_tol * p_src.z + 1e-6)
                        visible = true;
                }
            vis.at(y, x) = visible ? 1.0 : 0.0;
        }
    return vis;
}

}  // namespace warp4d
