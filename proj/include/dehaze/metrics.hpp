#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dehaze/filters.hpp"
#include "dehaze/image.hpp"

namespace dehaze {

// Constants used literally, not squared (see SsimConfig defaults).
struct SsimConfig {
    double sigma_g = 5.0;
    double c1 = 0.01;
    double c2 = 0.03;
};

// Same-resolution multi-sigma fusion; luminance term taken from the
// largest sigma.
struct MsSsimConfig {
    std::vector<double> sigmas{0.5, 1.0, 2.0, 4.0, 8.0};
    double alpha = 1.0;
    std::vector<double> betas;  // empty = all ones

    double beta(size_t j) const { return betas.empty() ? 1.0 : betas[j]; }
};

// +inf sentinel on identical images.
inline double psnr(const Image& x, const Image& y, double peak = 1.0) {
    require_same_shape(x, y, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        double d = x.data[i] - y.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

// Gaussian-window statistics shared by the metric and loss paths.
struct SsimStats {
    Image mu_x, mu_y, var_x, var_y, cov_xy;
};

inline SsimStats ssim_stats(const Image& x, const Image& y, const Kernel& k) {
    SsimStats s;
    s.mu_x = convolve(x, k);
    s.mu_y = convolve(y, k);
    Image xx(x.width, x.height, x.channels), yy = xx, xy = xx;
    for (size_t i = 0; i < x.data.size(); ++i) {
        xx.data[i] = x.data[i] * x.data[i];
        yy.data[i] = y.data[i] * y.data[i];
        xy.data[i] = x.data[i] * y.data[i];
    }
    s.var_x = convolve(xx, k);
    s.var_y = convolve(yy, k);
    s.cov_xy = convolve(xy, k);
    for (size_t i = 0; i < x.data.size(); ++i) {
        s.var_x.data[i] -= s.mu_x.data[i] * s.mu_x.data[i];
        s.var_y.data[i] -= s.mu_y.data[i] * s.mu_y.data[i];
        s.cov_xy.data[i] -= s.mu_x.data[i] * s.mu_y.data[i];
    }
    return s;
}

}  // namespace detail

// Per-channel SSIM maps averaged across channels into one map.
inline Image ssim_map(const Image& x, const Image& y, const SsimConfig& cfg = {}) {
    require_same_shape(x, y, "ssim_map");
    Kernel k = gaussian_kernel(cfg.sigma_g);
    detail::SsimStats s = detail::ssim_stats(x, y, k);
    Image map(x.width, x.height, 1, 0.0);
    const double inv_c = 1.0 / x.channels;
    for (int yy = 0; yy < x.height; ++yy) {
        for (int xx = 0; xx < x.width; ++xx) {
            double acc = 0.0;
            for (int c = 0; c < x.channels; ++c) {
                size_t i = (static_cast<size_t>(yy) * x.width + xx) * x.channels + c;
                double l = (2.0 * s.mu_x.data[i] * s.mu_y.data[i] + cfg.c1) /
                           (s.mu_x.data[i] * s.mu_x.data[i] +
                            s.mu_y.data[i] * s.mu_y.data[i] + cfg.c1);
                double cs = (2.0 * s.cov_xy.data[i] + cfg.c2) /
                            (s.var_x.data[i] + s.var_y.data[i] + cfg.c2);
                acc += l * cs;
            }
            map.at(xx, yy, 0) = acc * inv_c;
        }
    }
    return map;
}

inline double ssim(const Image& x, const Image& y, const SsimConfig& cfg = {}) {
    Image map = ssim_map(x, y, cfg);
    double acc = 0.0;
    for (double v : map.data) acc += v;
    return acc / static_cast<double>(map.data.size());
}

// value(p) = l_M^alpha * prod_j max(cs_j, 0)^beta_j, averaged over pixels
// and channels. l_M also clamped at 0 before exponentiation.
inline double ms_ssim(const Image& x, const Image& y, const MsSsimConfig& cfg = {}) {
    require_same_shape(x, y, "ms_ssim");
    const size_t n = x.data.size();
    const size_t m = cfg.sigmas.size();

    std::vector<double> value(n, 1.0);
    for (size_t j = 0; j < m; ++j) {
        Kernel k = gaussian_kernel(cfg.sigmas[j]);
        detail::SsimStats s = detail::ssim_stats(x, y, k);
        const double c2 = 0.03;
        for (size_t i = 0; i < n; ++i) {
            double cs = (2.0 * s.cov_xy.data[i] + c2) /
                        (s.var_x.data[i] + s.var_y.data[i] + c2);
            value[i] *= std::pow(std::max(cs, 0.0), cfg.beta(j));
        }
        if (j + 1 == m) {
            const double c1 = 0.01;
            for (size_t i = 0; i < n; ++i) {
                double l = (2.0 * s.mu_x.data[i] * s.mu_y.data[i] + c1) /
                           (s.mu_x.data[i] * s.mu_x.data[i] +
                            s.mu_y.data[i] * s.mu_y.data[i] + c1);
                value[i] *= std::pow(std::max(l, 0.0), cfg.alpha);
            }
        }
    }
    double acc = 0.0;
    for (double v : value) acc += v;
    return acc / static_cast<double>(n);
}

}  // namespace dehaze
