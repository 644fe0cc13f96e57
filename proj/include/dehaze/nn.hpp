#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "dehaze/filters.hpp"
#include "dehaze/image.hpp"

namespace dehaze {
namespace nn {

// Unrestricted-channel raster for intermediate activations.
struct Tensor {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

inline Tensor from_image(const Image& img) {
    Tensor t(img.width, img.height, img.channels);
    t.data = img.data;
    return t;
}

inline Image to_image(const Tensor& t) {
    Image img(t.width, t.height, t.channels);
    img.data = t.data;
    return img;
}

struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 0;  // odd
    std::vector<double> weights;  // [out][in][ky][kx]
    std::vector<double> bias;     // [out]

    ConvLayer() = default;
    ConvLayer(int in_c, int out_c, int k)
        : in_channels(in_c), out_channels(out_c), kernel_size(k),
          weights(static_cast<size_t>(out_c) * in_c * k * k, 0.0),
          bias(static_cast<size_t>(out_c), 0.0) {
        if (k % 2 == 0) throw std::invalid_argument("ConvLayer: kernel must be odd");
    }

    double w(int oc, int ic, int ky, int kx) const {
        return weights[((static_cast<size_t>(oc) * in_channels + ic) * kernel_size + ky) *
                           kernel_size + kx];
    }
    double& w(int oc, int ic, int ky, int kx) {
        return weights[((static_cast<size_t>(oc) * in_channels + ic) * kernel_size + ky) *
                           kernel_size + kx];
    }
};

struct ConvGrads {
    std::vector<double> weights;
    std::vector<double> bias;
};

// Same-size convolution, reflect-101 padding.
inline Tensor conv2d(const ConvLayer& L, const Tensor& in) {
    if (in.channels != L.in_channels)
        throw std::invalid_argument("conv2d: channel mismatch");
    Tensor out(in.width, in.height, L.out_channels);
    const int r = L.kernel_size / 2;
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            for (int oc = 0; oc < L.out_channels; ++oc) {
                double acc = L.bias[oc];
                for (int ky = 0; ky < L.kernel_size; ++ky) {
                    int sy = reflect101(y + ky - r, in.height);
                    for (int kx = 0; kx < L.kernel_size; ++kx) {
                        int sx = reflect101(x + kx - r, in.width);
                        for (int ic = 0; ic < L.in_channels; ++ic)
                            acc += L.w(oc, ic, ky, kx) * in.at(sx, sy, ic);
                    }
                }
                out.at(x, y, oc) = acc;
            }
        }
    }
    return out;
}

// Gradients of a conv2d output w.r.t. parameters and input. d_in is
// accumulated through the same reflected indices the forward pass read.
inline void conv2d_backward(const ConvLayer& L, const Tensor& in, const Tensor& d_out,
                            ConvGrads& grads, Tensor* d_in) {
    if (grads.weights.size() != L.weights.size()) {
        grads.weights.assign(L.weights.size(), 0.0);
        grads.bias.assign(L.bias.size(), 0.0);
    }
    if (d_in && (d_in->width != in.width || d_in->channels != in.channels))
        *d_in = Tensor(in.width, in.height, in.channels);
    const int r = L.kernel_size / 2;
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            for (int oc = 0; oc < L.out_channels; ++oc) {
                const double g = d_out.at(x, y, oc);
                if (g == 0.0) continue;
                grads.bias[oc] += g;
                for (int ky = 0; ky < L.kernel_size; ++ky) {
                    int sy = reflect101(y + ky - r, in.height);
                    for (int kx = 0; kx < L.kernel_size; ++kx) {
                        int sx = reflect101(x + kx - r, in.width);
                        for (int ic = 0; ic < L.in_channels; ++ic) {
                            grads.weights[((static_cast<size_t>(oc) * L.in_channels + ic) *
                                               L.kernel_size + ky) * L.kernel_size + kx] +=
                                g * in.at(sx, sy, ic);
                            if (d_in) d_in->at(sx, sy, ic) += g * L.w(oc, ic, ky, kx);
                        }
                    }
                }
            }
        }
    }
}

inline Tensor relu(const Tensor& in) {
    Tensor out = in;
    for (double& v : out.data) v = std::max(0.0, v);
    return out;
}

// Subgradient 0 at 0: mask by pre-activation > 0.
inline Tensor relu_backward(const Tensor& pre, const Tensor& d_out) {
    Tensor d_in = d_out;
    for (size_t i = 0; i < d_in.data.size(); ++i)
        if (pre.data[i] <= 0.0) d_in.data[i] = 0.0;
    return d_in;
}

// 2x2 mean pooling, stride 2. Odd trailing edges fold into the last cell.
inline Tensor avgpool2(const Tensor& in) {
    int ow = (in.width + 1) / 2, oh = (in.height + 1) / 2;
    Tensor out(ow, oh, in.channels);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            int x0 = 2 * x, y0 = 2 * y;
            int x1 = std::min(x0 + 2, in.width), y1 = std::min(y0 + 2, in.height);
            for (int c = 0; c < in.channels; ++c) {
                double acc = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) acc += in.at(xx, yy, c);
                out.at(x, y, c) = acc / ((x1 - x0) * (y1 - y0));
            }
        }
    }
    return out;
}

inline Tensor avgpool2_backward(const Tensor& in, const Tensor& d_out) {
    Tensor d_in(in.width, in.height, in.channels);
    for (int y = 0; y < d_out.height; ++y) {
        for (int x = 0; x < d_out.width; ++x) {
            int x0 = 2 * x, y0 = 2 * y;
            int x1 = std::min(x0 + 2, in.width), y1 = std::min(y0 + 2, in.height);
            for (int c = 0; c < in.channels; ++c) {
                double g = d_out.at(x, y, c) / ((x1 - x0) * (y1 - y0));
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) d_in.at(xx, yy, c) += g;
            }
        }
    }
    return d_in;
}

inline Tensor concat(const std::vector<const Tensor*>& parts) {
    int w = parts[0]->width, h = parts[0]->height, c = 0;
    for (auto* p : parts) c += p->channels;
    Tensor out(w, h, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int oc = 0;
            for (auto* p : parts)
                for (int pc = 0; pc < p->channels; ++pc)
                    out.at(x, y, oc++) = p->at(x, y, pc);
        }
    }
    return out;
}

// Adds the slices of d_cat back onto the per-part gradient tensors.
inline void split_grad(const Tensor& d_cat, const std::vector<Tensor*>& d_parts) {
    for (int y = 0; y < d_cat.height; ++y) {
        for (int x = 0; x < d_cat.width; ++x) {
            int oc = 0;
            for (auto* p : d_parts)
                for (int pc = 0; pc < p->channels; ++pc)
                    p->at(x, y, pc) += d_cat.at(x, y, oc++);
        }
    }
}

inline void init_gaussian(ConvLayer& L, std::mt19937_64& rng, double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (double& w : L.weights) w = dist(rng);
    for (double& b : L.bias) b = 0.0;
}

}  // namespace nn
}  // namespace dehaze
