#pragma once

#include <random>

#include "dehaze/image.hpp"

namespace testutil {

inline dehaze::Image random_image(int w, int h, int c, uint64_t seed,
                                  double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    dehaze::Image img(w, h, c);
    for (double& v : img.data) v = uni(rng);
    return img;
}

inline double max_abs_diff(const dehaze::Image& a, const dehaze::Image& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace testutil
