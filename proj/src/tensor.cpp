#include "warp4d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace warp4d {

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    size_t n = 1;
    for (int d : shape_) {
        if (d < 0) throw DimensionError("negative tensor dimension");
        n *= static_cast<size_t>(d);
    }
    data_.assign(n, fill);
}

Tensor Tensor::frame(int f) const {
    if (ndim() < 2) throw DimensionError("frame() needs at least 2 dims");
    if (f < 0 || f >= shape_[0]) throw DimensionError("frame index out of range");
    std::vector<int> sub(shape_.begin() + 1, shape_.end());
    Tensor out(sub);
    size_t stride = out.size();
    std::copy(data_.begin() + static_cast<ptrdiff_t>(stride * static_cast<size_t>(f)),
              data_.begin() + static_cast<ptrdiff_t>(stride * static_cast<size_t>(f + 1)),
              out.data_.begin());
    return out;
}

size_t Tensor::site_count() const {
    if (shape_.empty()) return 1;
    size_t n = 1;
    for (size_t i = 0; i + 1 < shape_.size(); ++i) n *= static_cast<size_t>(shape_[i]);
    return n;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": shape mismatch");
}

namespace {

struct Hw {
    int h, w, c;
    bool has_c;
};

Hw spatial_shape(const Tensor& t, const char* what) {
    if (t.ndim() == 2) return {t.dim(0), t.dim(1), 1, false};
    if (t.ndim() == 3) return {t.dim(0), t.dim(1), t.dim(2), true};
    throw DimensionError(std::string(what) + ": expected (H,W) or (H,W,C) tensor");
}

}  // namespace

Tensor area_resize(const Tensor& src, int out_h, int out_w) {
    Hw s = spatial_shape(src, "area_resize");
    if (out_h <= 0 || out_w <= 0) throw DimensionError("area_resize: non-positive output size");
    Tensor out(s.has_c ? std::vector<int>{out_h, out_w, s.c}
                       : std::vector<int>{out_h, out_w});
    const double sy = static_cast<double>(s.h) / out_h;
    const double sx = static_cast<double>(s.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int iy0 = static_cast<int>(std::floor(y0));
        const int iy1 = std::min(s.h, static_cast<int>(std::ceil(y1)));
        for (int ox = 0; ox < out_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const int ix0 = static_cast<int>(std::floor(x0));
            const int ix1 = std::min(s.w, static_cast<int>(std::ceil(x1)));
            for (int ch = 0; ch < s.c; ++ch) {
                double acc = 0.0, wsum = 0.0;
                for (int iy = iy0; iy < iy1; ++iy) {
                    const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                    for (int ix = ix0; ix < ix1; ++ix) {
                        const double wx =
                            std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                        const double w = wy * wx;
                        acc += w * (s.has_c ? src.at(iy, ix, ch) : src.at(iy, ix));
                        wsum += w;
                    }
                }
                const double v = acc / wsum;
                if (s.has_c)
                    out.at(oy, ox, ch) = v;
                else
                    out.at(oy, ox) = v;
            }
        }
    }
    return out;
}

Tensor bilinear_resize(const Tensor& src, int out_h, int out_w) {
    Hw s = spatial_shape(src, "bilinear_resize");
    if (out_h <= 0 || out_w <= 0)
        throw DimensionError("bilinear_resize: non-positive output size");
    Tensor out(s.has_c ? std::vector<int>{out_h, out_w, s.c}
                       : std::vector<int>{out_h, out_w});
    const double sy = static_cast<double>(s.h) / out_h;
    const double sx = static_cast<double>(s.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(s.h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, s.h - 1);
        const double ty = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(s.w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, s.w - 1);
            const double tx = fx - x0;
            for (int ch = 0; ch < s.c; ++ch) {
                auto px = [&](int y, int x) {
                    return s.has_c ? src.at(y, x, ch) : src.at(y, x);
                };
                const double v = (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x1)) +
                                 ty * ((1 - tx) * px(y1, x0) + tx * px(y1, x1));
                if (s.has_c)
                    out.at(oy, ox, ch) = v;
                else
                    out.at(oy, ox) = v;
            }
        }
    }
    return out;
}

Tensor box_blur(const Tensor& src, int radius) {
    if (src.ndim() != 2) throw DimensionError("box_blur: expected (H,W) tensor");
    if (radius < 0) throw DomainError("box_blur: negative radius");
    if (radius == 0) return src;
    const int h = src.dim(0), w = src.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            double acc = 0.0;
            for (int yy = y0; yy <= y1; ++yy)
                for (int xx = x0; xx <= x1; ++xx) acc += src.at(yy, xx);
            out.at(y, x) = acc / ((y1 - y0 + 1) * (x1 - x0 + 1));
        }
    }
    return out;
}

Tensor erode(const Tensor& mask, int steps) {
    if (mask.ndim() != 2) throw DimensionError("erode: expected (H,W) tensor");
    const int h = mask.dim(0), w = mask.dim(1);
    Tensor cur = mask;
    for (int s = 0; s < steps; ++s) {
        Tensor next({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bool keep = true;
                for (int dy = -1; dy <= 1 && keep; ++dy)
                    for (int dx = -1; dx <= 1 && keep; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w || cur.at(yy, xx) < 0.5)
                            keep = false;
                    }
                next.at(y, x) = keep ? 1.0 : 0.0;
            }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace warp4d
