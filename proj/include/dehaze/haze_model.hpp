#pragma once

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dehaze/filters.hpp"
#include "dehaze/image.hpp"

namespace dehaze {

// Scene distance per pixel, arbitrary units, d >= 0.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> d;

    DepthMap() = default;
    DepthMap(int w, int h, double fill = 0.0)
        : width(w), height(h), d(static_cast<size_t>(w) * h, fill) {}

    double& at(int x, int y) { return d[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return d[static_cast<size_t>(y) * width + x]; }
};

// Per-pixel transmission in (0,1].
struct TransmissionMap {
    int width = 0;
    int height = 0;
    std::vector<double> t;

    TransmissionMap() = default;
    TransmissionMap(int w, int h, double fill = 1.0)
        : width(w), height(h), t(static_cast<size_t>(w) * h, fill) {}

    double& at(int x, int y) { return t[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return t[static_cast<size_t>(y) * width + x]; }
};

using Airlight = std::array<double, 3>;

struct HazeParams {
    Airlight A{0.9, 0.9, 0.9};
    double beta = 1.0;
    double t_min = 0.1;
};

inline TransmissionMap transmission_from_depth(const DepthMap& depth, double beta) {
    if (beta <= 0.0)
        throw std::invalid_argument("transmission_from_depth: beta must be > 0");
    TransmissionMap t(depth.width, depth.height);
    for (size_t i = 0; i < depth.d.size(); ++i) t.t[i] = std::exp(-beta * depth.d[i]);
    return t;
}

// I = J*t + A*(1-t). Convex combination, stays in [0,1] for valid inputs.
inline Image synthesize_haze(const Image& clean, const TransmissionMap& t,
                             const Airlight& A) {
    if (clean.width != t.width || clean.height != t.height)
        throw std::invalid_argument("synthesize_haze: dimension mismatch");
    Image out(clean.width, clean.height, clean.channels);
    for (int y = 0; y < clean.height; ++y) {
        for (int x = 0; x < clean.width; ++x) {
            double tx = t.at(x, y);
            for (int c = 0; c < clean.channels; ++c)
                out.at(x, y, c) = clean.at(x, y, c) * tx + A[c] * (1.0 - tx);
        }
    }
    return out;
}

// J = (I - A*(1-t)) / max(t, t_min), clamped to [0,1].
inline Image invert_haze(const Image& hazy, const TransmissionMap& t,
                         const Airlight& A, double t_min) {
    if (hazy.width != t.width || hazy.height != t.height)
        throw std::invalid_argument("invert_haze: dimension mismatch");
    if (t_min <= 0.0 || t_min >= 1.0)
        throw std::invalid_argument("invert_haze: t_min must be in (0,1)");
    Image out(hazy.width, hazy.height, hazy.channels);
    for (int y = 0; y < hazy.height; ++y) {
        for (int x = 0; x < hazy.width; ++x) {
            double tx = std::max(t.at(x, y), t_min);
            for (int c = 0; c < hazy.channels; ++c) {
                double j = (hazy.at(x, y, c) - A[c] * (1.0 - t.at(x, y))) / tx;
                out.at(x, y, c) = std::min(1.0, std::max(0.0, j));
            }
        }
    }
    return out;
}

enum class DepthKind { Ramp, Radial, BlobNoise };

inline DepthKind depth_kind_from_string(const std::string& s) {
    if (s == "ramp") return DepthKind::Ramp;
    if (s == "radial") return DepthKind::Radial;
    if (s == "blob") return DepthKind::BlobNoise;
    throw std::invalid_argument("unknown depth kind: " + s);
}

constexpr double kDepthMax = 3.0;

// Deterministic synthetic depth, values in [0, kDepthMax].
inline DepthMap gen_depth(DepthKind kind, int width, int height, uint64_t seed) {
    DepthMap depth(width, height);
    switch (kind) {
        case DepthKind::Ramp:
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    depth.at(x, y) = width > 1 ? kDepthMax * x / (width - 1) : 0.0;
            break;
        case DepthKind::Radial: {
            double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
            double rmax = std::sqrt(cx * cx + cy * cy);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    double r = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
                    depth.at(x, y) = rmax > 0 ? kDepthMax * r / rmax : 0.0;
                }
            break;
        }
        case DepthKind::BlobNoise: {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            Image noise(width, height, 1);
            for (double& v : noise.data) v = uni(rng);
            Kernel k = gaussian_kernel(std::max(1.0, std::min(width, height) / 8.0));
            Image smooth = convolve(noise, k);
            double lo = 1e300, hi = -1e300;
            for (double v : smooth.data) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            double span = hi > lo ? hi - lo : 1.0;
            for (size_t i = 0; i < smooth.data.size(); ++i)
                depth.d[i] = kDepthMax * (smooth.data[i] - lo) / span;
            break;
        }
    }
    return depth;
}

struct Interval {
    double lo, hi;
};

// Uniform draws, one shared airlight value across channels.
inline HazeParams random_haze_params(uint64_t seed,
                                     Interval a_range = {0.7, 1.0},
                                     Interval beta_range = {0.5, 2.0}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ua(a_range.lo, a_range.hi);
    std::uniform_real_distribution<double> ub(beta_range.lo, beta_range.hi);
    HazeParams p;
    double a = ua(rng);
    p.A = {a, a, a};
    p.beta = ub(rng);
    p.t_min = 0.1;
    return p;
}

// Debug dumps with fixed scaling; lossy by design.
inline Image transmission_to_image(const TransmissionMap& t) {
    Image img(t.width, t.height, 1);
    img.data.assign(t.t.begin(), t.t.end());
    return img;
}

inline Image depth_to_image(const DepthMap& d) {
    Image img(d.width, d.height, 1);
    for (size_t i = 0; i < d.d.size(); ++i) img.data[i] = d.d[i] / kDepthMax;
    return img;
}

}  // namespace dehaze
