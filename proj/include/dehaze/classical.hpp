#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dehaze/filters.hpp"
#include "dehaze/haze_model.hpp"
#include "dehaze/image.hpp"

namespace dehaze {

struct DcpConfig {
    int patch_radius = 7;        // 15x15 window
    double omega = 0.95;
    double top_fraction = 0.001;
    double t_min = 0.1;
    int guided_radius = 30;
    double guided_eps = 1e-3;
};

struct ClaheConfig {
    int tiles_x = 8;
    int tiles_y = 8;
    double clip_limit = 2.0;  // multiple of the uniform bin height
    int bins = 256;
};

// Channel-min followed by a window min.
inline Image dark_channel(const Image& img, int patch_radius) {
    Image cmin(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double m = img.at(x, y, 0);
            for (int c = 1; c < img.channels; ++c) m = std::min(m, img.at(x, y, c));
            cmin.at(x, y, 0) = m;
        }
    }
    return min_filter(cmin, patch_radius);
}

// Channel values of the brightest-luminance pixel among the top dark-channel
// fraction; ties broken by smallest row-major index.
inline Airlight estimate_atmospheric_light(const Image& img, const Image& dark,
                                           double top_fraction) {
    const size_t n = dark.data.size();
    if (n == 0) throw std::invalid_argument("estimate_atmospheric_light: empty image");
    size_t keep = static_cast<size_t>(
        std::ceil(top_fraction * static_cast<double>(n)));
    keep = std::min(std::max<size_t>(keep, 1), n);

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(keep), idx.end(),
                      [&dark](size_t a, size_t b) {
                          if (dark.data[a] != dark.data[b])
                              return dark.data[a] > dark.data[b];
                          return a < b;
                      });

    Image lum = to_luminance(img);
    size_t best = idx[0];
    for (size_t i = 1; i < keep; ++i) {
        size_t cand = idx[i];
        if (lum.data[cand] > lum.data[best] ||
            (lum.data[cand] == lum.data[best] && cand < best))
            best = cand;
    }
    int x = static_cast<int>(best % img.width);
    int y = static_cast<int>(best / img.width);
    Airlight A;
    for (int c = 0; c < 3; ++c)
        A[c] = img.at(x, y, img.channels == 3 ? c : 0);
    return A;
}

// t = 1 - omega * dark_channel(I/A), clamped to [0.01, 1].
inline TransmissionMap estimate_transmission(const Image& img, const Airlight& A,
                                             double omega, int patch_radius) {
    Image norm(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                norm.at(x, y, c) = img.at(x, y, c) / std::max(A[c], 1e-6);
    Image dark = dark_channel(norm, patch_radius);
    TransmissionMap t(img.width, img.height);
    for (size_t i = 0; i < dark.data.size(); ++i)
        t.t[i] = std::min(1.0, std::max(0.01, 1.0 - omega * dark.data[i]));
    return t;
}

// Guided-filter refinement against the (luminance) guide, clamped to (0,1].
inline TransmissionMap refine_transmission(const TransmissionMap& t_raw,
                                           const Image& guide, const DcpConfig& cfg) {
    Image traw(t_raw.width, t_raw.height, 1);
    traw.data.assign(t_raw.t.begin(), t_raw.t.end());
    Image refined = guided_filter(to_luminance(guide), traw, cfg.guided_radius,
                                  cfg.guided_eps);
    TransmissionMap out(t_raw.width, t_raw.height);
    for (size_t i = 0; i < refined.data.size(); ++i)
        out.t[i] = std::min(1.0, std::max(0.01, refined.data[i]));
    return out;
}

inline Image dcp_dehaze(const Image& img, const DcpConfig& cfg = {}) {
    Image dark = dark_channel(img, cfg.patch_radius);
    Airlight A = estimate_atmospheric_light(img, dark, cfg.top_fraction);
    TransmissionMap t = estimate_transmission(img, A, cfg.omega, cfg.patch_radius);
    t = refine_transmission(t, img, cfg);
    return invert_haze(img, t, A, cfg.t_min);
}

// Tile-based histogram equalization on luminance with clip-and-redistribute;
// chroma rescaled proportionally.
inline Image clahe(const Image& img, const ClaheConfig& cfg = {}) {
    if (cfg.tiles_x < 1 || cfg.tiles_y < 1 || cfg.bins < 2 || cfg.clip_limit < 1.0)
        throw std::invalid_argument("clahe: bad config");
    if (cfg.tiles_x > img.width || cfg.tiles_y > img.height)
        throw std::invalid_argument("clahe: more tiles than pixels");

    Image lum = to_luminance(img);

    // Per-tile clipped-CDF mappings over `bins` levels.
    const int tx = cfg.tiles_x, ty = cfg.tiles_y;
    std::vector<std::vector<double>> mapping(
        static_cast<size_t>(tx) * ty, std::vector<double>(cfg.bins));
    std::vector<char> identity(static_cast<size_t>(tx) * ty, 0);

    auto tile_x0 = [&](int i) { return i * img.width / tx; };
    auto tile_y0 = [&](int j) { return j * img.height / ty; };

    for (int j = 0; j < ty; ++j) {
        for (int i = 0; i < tx; ++i) {
            int x0 = tile_x0(i), x1 = tile_x0(i + 1);
            int y0 = tile_y0(j), y1 = tile_y0(j + 1);
            std::vector<double> hist(cfg.bins, 0.0);
            int count = 0;
            int occupied_bin = -1;
            bool single_bin = true;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    int b = std::min(cfg.bins - 1,
                                     static_cast<int>(lum.at(x, y, 0) * cfg.bins));
                    hist[b] += 1.0;
                    ++count;
                    if (occupied_bin < 0) occupied_bin = b;
                    else if (b != occupied_bin) single_bin = false;
                }
            }
            std::vector<double>& map = mapping[static_cast<size_t>(j) * tx + i];
            if (single_bin || count == 0) {
                // Flat tile: identity mapping, avoids 0/0 in CDF normalization
                identity[static_cast<size_t>(j) * tx + i] = 1;
                continue;
            }
            double clip = cfg.clip_limit * static_cast<double>(count) / cfg.bins;
            double excess = 0.0;
            for (double& h : hist) {
                if (h > clip) {
                    excess += h - clip;
                    h = clip;
                }
            }
            double add = excess / cfg.bins;
            for (double& h : hist) h += add;
            double cum = 0.0;
            for (int b = 0; b < cfg.bins; ++b) {
                cum += hist[b];
                map[b] = cum / count;
            }
        }
    }

    // Bilinear interpolation between the four surrounding tile mappings.
    Image out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double fx = (x + 0.5) * tx / img.width - 0.5;
            double fy = (y + 0.5) * ty / img.height - 0.5;
            int i0 = static_cast<int>(std::floor(fx));
            int j0 = static_cast<int>(std::floor(fy));
            double wx = fx - i0, wy = fy - j0;
            int i1 = std::min(i0 + 1, tx - 1);
            int j1 = std::min(j0 + 1, ty - 1);
            i0 = std::max(i0, 0);
            j0 = std::max(j0, 0);

            double v = lum.at(x, y, 0);
            int b = std::min(cfg.bins - 1, static_cast<int>(v * cfg.bins));
            auto m = [&](int i, int j) {
                size_t ti = static_cast<size_t>(j) * tx + i;
                return identity[ti] ? v : mapping[ti][b];
            };
            double new_y = (1 - wy) * ((1 - wx) * m(i0, j0) + wx * m(i1, j0)) +
                           wy * ((1 - wx) * m(i0, j1) + wx * m(i1, j1));

            if (img.channels == 1) {
                out.at(x, y, 0) = std::min(1.0, std::max(0.0, new_y));
            } else {
                double scale = v > 1e-9 ? new_y / v : 1.0;
                for (int c = 0; c < 3; ++c)
                    out.at(x, y, c) =
                        std::min(1.0, std::max(0.0, img.at(x, y, c) * scale));
            }
        }
    }
    return out;
}

// Left-to-right composition of dehazing stages; identity for the empty list.
using DehazeStage = std::function<Image(const Image&)>;

inline Image cascade(const Image& img, const std::vector<DehazeStage>& stages) {
    Image cur = img;
    for (const auto& stage : stages) cur = stage(cur);
    return cur;
}

}  // namespace dehaze
