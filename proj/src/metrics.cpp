#include "warp4d/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace warp4d {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_kernel() {
    std::array<double, kWin> k{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kHalf;
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Per-pixel SSIM over the valid region ((H-10) x (W-10)) of one channel.
// `chan` indexes into an (H,W) or (H,W,C) tensor.
Tensor ssim_map_channel(const Tensor& a, const Tensor& b, int chan) {
    const int h = a.dim(0), w = a.dim(1);
    const bool has_c = a.ndim() == 3;
    const auto px = [&](const Tensor& t, int y, int x) {
        return has_c ? t.at(y, x, chan) : t.at(y, x);
    };
    const std::array<double, kWin> k = gaussian_kernel();

    // Separable Gaussian filtering of the five moment images, horizontal
    // pass into (H, W-10), vertical pass into (H-10, W-10).
    const int vw = w - kWin + 1, vh = h - kWin + 1;
    std::vector<std::array<double, 5>> row(static_cast<size_t>(h) * vw);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < vw; ++x) {
            std::array<double, 5> acc{};
            for (int i = 0; i < kWin; ++i) {
                const double va = px(a, y, x + i), vb = px(b, y, x + i);
                const double kk = k[static_cast<size_t>(i)];
                acc[0] += kk * va;
                acc[1] += kk * vb;
                acc[2] += kk * va * va;
                acc[3] += kk * vb * vb;
                acc[4] += kk * va * vb;
            }
            row[static_cast<size_t>(y) * vw + x] = acc;
        }
    Tensor out({vh, vw});
    for (int y = 0; y < vh; ++y)
        for (int x = 0; x < vw; ++x) {
            std::array<double, 5> m{};
            for (int i = 0; i < kWin; ++i) {
                const std::array<double, 5>& r = row[static_cast<size_t>(y + i) * vw + x];
                const double kk = k[static_cast<size_t>(i)];
                for (int f = 0; f < 5; ++f) m[static_cast<size_t>(f)] += kk * r[static_cast<size_t>(f)];
            }
            const double mu_a = m[0], mu_b = m[1];
            const double var_a = m[2] - mu_a * mu_a;
            const double var_b = m[3] - mu_b * mu_b;
            const double cov = m[4] - mu_a * mu_b;
            out.at(y, x) = ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                           ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
        }
    return out;
}

Tensor ssim_map(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("ssim: expected (H,W) or (H,W,C)");
    if (a.dim(0) < kWin || a.dim(1) < kWin)
        throw DimensionError("ssim: both spatial dims must be >= 11");
    const int chans = a.ndim() == 3 ? a.dim(2) : 1;
    Tensor map = ssim_map_channel(a, b, 0);
    for (int c = 1; c < chans; ++c) {
        const Tensor mc = ssim_map_channel(a, b, c);
        for (size_t i = 0; i < map.size(); ++i) map[i] += mc[i];
    }
    for (size_t i = 0; i < map.size(); ++i) map[i] /= chans;
    return map;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.empty()) throw DomainError("mse: empty tensors");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double mae(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mae");
    if (a.empty()) throw DomainError("mae: empty tensors");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask, double value) {
    require_same_shape(a, b, "masked_mse");
    const size_t sites = mask.size();
    if (sites == 0 || a.size() % sites != 0)
        throw DimensionError("masked_mse: mask must cover the leading dims");
    const size_t chans = a.size() / sites;
    double s = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < sites; ++i) {
        if (mask[i] != value) continue;
        for (size_t c = 0; c < chans; ++c) {
            const double d = a[i * chans + c] - b[i * chans + c];
            s += d * d;
        }
        n += chans;
    }
    if (n == 0) throw DomainError("masked_mse: no site matches the mask value");
    return s / static_cast<double>(n);
}

double psnr(const Tensor& a, const Tensor& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

double ssim(const Tensor& a, const Tensor& b) {
    const Tensor map = ssim_map(a, b);
    double s = 0.0;
    for (size_t i = 0; i < map.size(); ++i) s += map[i];
    return s / static_cast<double>(map.size());
}

double masked_ssim(const Tensor& a, const Tensor& b, const Tensor& mask, double value) {
    if (mask.ndim() != 2 || mask.dim(0) != a.dim(0) || mask.dim(1) != a.dim(1))
        throw DimensionError("masked_ssim: mask must be (H,W) matching the images");
    const Tensor map = ssim_map(a, b);
    double s = 0.0;
    size_t n = 0;
    for (int y = 0; y < map.dim(0); ++y)
        for (int x = 0; x < map.dim(1); ++x) {
            if (mask.at(y + kHalf, x + kHalf) != value) continue;
            s += map.at(y, x);
            ++n;
        }
    if (n == 0) throw DomainError("masked_ssim: no valid-window site matches");
    return s / static_cast<double>(n);
}

}  // namespace warp4d
