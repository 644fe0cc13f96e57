#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dehaze/image.hpp"

namespace dehaze {

// Separable 1-D smoothing kernel, weights sum to 1.
struct Kernel {
    int radius = 0;
    std::vector<double> weights;  // size 2*radius+1, index offset by +radius
};

// Truncated at 3*sigma and renormalized.
inline Kernel gaussian_kernel(double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    Kernel k;
    k.radius = static_cast<int>(std::ceil(3.0 * sigma));
    k.weights.resize(2 * k.radius + 1);
    double sum = 0.0;
    for (int i = -k.radius; i <= k.radius; ++i) {
        double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        k.weights[i + k.radius] = w;
        sum += w;
    }
    for (double& w : k.weights) w /= sum;
    return k;
}

// Reflect-101 index: ...2 1 | 0 1 2 ... n-1 | n-2 n-3...
// Valid for offsets of any magnitude.
inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

namespace detail {

enum class Axis { X, Y };

inline Image convolve_axis(const Image& img, const Kernel& k, Axis axis) {
    Image out(img.width, img.height, img.channels);
    const int n = (axis == Axis::X) ? img.width : img.height;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int o = -k.radius; o <= k.radius; ++o) {
                    int sx = x, sy = y;
                    if (axis == Axis::X) sx = reflect101(x + o, n);
                    else sy = reflect101(y + o, n);
                    acc += k.weights[o + k.radius] * img.at(sx, sy, c);
                }
                out.at(x, y, c) = acc;
            }
        }
    }
    return out;
}

// Transpose of convolve_axis as a linear map (scatter through the same
// reflected indices). Needed for exact gradients of filtered statistics;
// near borders this is not the same as convolving again.
inline Image convolve_axis_adjoint(const Image& g, const Kernel& k, Axis axis) {
    Image out(g.width, g.height, g.channels, 0.0);
    const int n = (axis == Axis::X) ? g.width : g.height;
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            for (int c = 0; c < g.channels; ++c) {
                const double gv = g.at(x, y, c);
                if (gv == 0.0) continue;
                for (int o = -k.radius; o <= k.radius; ++o) {
                    int sx = x, sy = y;
                    if (axis == Axis::X) sx = reflect101(x + o, n);
                    else sy = reflect101(y + o, n);
                    out.at(sx, sy, c) += k.weights[o + k.radius] * gv;
                }
            }
        }
    }
    return out;
}

}  // namespace detail

// Separable 2-D convolution with reflect-101 boundary.
inline Image convolve(const Image& img, const Kernel& k) {
    return detail::convolve_axis(detail::convolve_axis(img, k, detail::Axis::X),
                                 k, detail::Axis::Y);
}

// Adjoint of convolve: (convolve_adjoint(g), x) == (g, convolve(x)).
inline Image convolve_adjoint(const Image& g, const Kernel& k) {
    return detail::convolve_axis_adjoint(
        detail::convolve_axis_adjoint(g, k, detail::Axis::Y), k, detail::Axis::X);
}

// Mean over a (2r+1)^2 window, reflect-101 boundary. Running sums per axis.
inline Image box_filter(const Image& img, int radius) {
    if (radius < 0) throw std::invalid_argument("box_filter: negative radius");
    if (radius >= std::min(img.width, img.height))
        throw std::invalid_argument("box_filter: radius exceeds image size");
    if (radius == 0) return img;

    auto pass = [radius](const Image& in, detail::Axis axis) {
        Image out(in.width, in.height, in.channels);
        const int n = (axis == detail::Axis::X) ? in.width : in.height;
        const int m = (axis == detail::Axis::X) ? in.height : in.width;
        const double inv = 1.0 / (2 * radius + 1);
        for (int j = 0; j < m; ++j) {
            for (int c = 0; c < in.channels; ++c) {
                auto get = [&](int i) {
                    i = reflect101(i, n);
                    return (axis == detail::Axis::X) ? in.at(i, j, c) : in.at(j, i, c);
                };
                double acc = 0.0;
                for (int o = -radius; o <= radius; ++o) acc += get(o);
                for (int i = 0; i < n; ++i) {
                    double v = acc * inv;
                    if (axis == detail::Axis::X) out.at(i, j, c) = v;
                    else out.at(j, i, c) = v;
                    acc += get(i + radius + 1) - get(i - radius);
                }
            }
        }
        return out;
    };
    return pass(pass(img, detail::Axis::X), detail::Axis::Y);
}

// Minimum over a (2r+1)^2 window, reflect-101 boundary. Separable.
inline Image min_filter(const Image& img, int radius) {
    if (radius < 0) throw std::invalid_argument("min_filter: negative radius");
    if (radius == 0) return img;

    auto pass = [radius](const Image& in, detail::Axis axis) {
        Image out(in.width, in.height, in.channels);
        const int n = (axis == detail::Axis::X) ? in.width : in.height;
        for (int y = 0; y < in.height; ++y) {
            for (int x = 0; x < in.width; ++x) {
                for (int c = 0; c < in.channels; ++c) {
                    double m = 1e300;
                    for (int o = -radius; o <= radius; ++o) {
                        int sx = x, sy = y;
                        if (axis == detail::Axis::X) sx = reflect101(x + o, n);
                        else sy = reflect101(y + o, n);
                        m = std::min(m, in.at(sx, sy, c));
                    }
                    out.at(x, y, c) = m;
                }
            }
        }
        return out;
    };
    return pass(pass(img, detail::Axis::X), detail::Axis::Y);
}

// He et al. guided filter on single-channel input. Color guides are reduced
// to luminance by the caller (see refine_transmission).
inline Image guided_filter(const Image& guide, const Image& input, int radius, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("guided_filter: eps must be > 0");
    if (guide.channels != 1)
        throw std::invalid_argument("guided_filter: guide must be single-channel");
    if (input.channels != 1)
        throw std::invalid_argument("guided_filter: input must be single-channel");
    if (guide.width != input.width || guide.height != input.height)
        throw std::invalid_argument("guided_filter: dimension mismatch");

    int r = std::min(radius, std::min(guide.width, guide.height) - 1);

    Image mean_g = box_filter(guide, r);
    Image mean_p = box_filter(input, r);

    Image gg(guide.width, guide.height, 1), gp(guide.width, guide.height, 1);
    for (size_t i = 0; i < guide.data.size(); ++i) {
        gg.data[i] = guide.data[i] * guide.data[i];
        gp.data[i] = guide.data[i] * input.data[i];
    }
    Image corr_gg = box_filter(gg, r);
    Image corr_gp = box_filter(gp, r);

    Image a(guide.width, guide.height, 1), b(guide.width, guide.height, 1);
    for (size_t i = 0; i < a.data.size(); ++i) {
        double var_g = corr_gg.data[i] - mean_g.data[i] * mean_g.data[i];
        double cov_gp = corr_gp.data[i] - mean_g.data[i] * mean_p.data[i];
        a.data[i] = cov_gp / (var_g + eps);
        b.data[i] = mean_p.data[i] - a.data[i] * mean_g.data[i];
    }
    Image mean_a = box_filter(a, r);
    Image mean_b = box_filter(b, r);

    Image out(guide.width, guide.height, 1);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = mean_a.data[i] * guide.data[i] + mean_b.data[i];
    return out;
}

}  // namespace dehaze
