#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dehaze/image.hpp"
#include "dehaze/losses.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/nn.hpp"

namespace dehaze {

// K-estimation dehazer: five convolutions with growing receptive fields,
// multi-scale concatenations, J = K*I - K + b.
struct AodNet {
    nn::ConvLayer conv1{3, 3, 1};
    nn::ConvLayer conv2{3, 3, 3};
    nn::ConvLayer conv3{6, 3, 5};
    nn::ConvLayer conv4{6, 3, 7};
    nn::ConvLayer conv5{12, 3, 3};
    static constexpr double offset_b = 1.0;

    std::vector<nn::ConvLayer*> layers() {
        return {&conv1, &conv2, &conv3, &conv4, &conv5};
    }
    std::vector<const nn::ConvLayer*> layers() const {
        return {&conv1, &conv2, &conv3, &conv4, &conv5};
    }

    size_t parameter_count() const {
        size_t n = 0;
        for (auto* L : layers()) n += L->weights.size() + L->bias.size();
        return n;
    }
};

inline AodNet aodnet_init(uint64_t seed, double weight_std = 0.01) {
    AodNet net;
    std::mt19937_64 rng(seed);
    for (auto* L : net.layers()) nn::init_gaussian(*L, rng, weight_std);
    return net;
}

struct AodForward {
    nn::Tensor input;                      // hazy image
    nn::Tensor pre1, c1, pre2, c2, pre3, c3, pre4, c4, pre5, k;
    Image j;                               // unclamped output
};

inline AodForward aodnet_forward_full(const AodNet& net, const Image& hazy) {
    if (hazy.channels != 3)
        throw std::invalid_argument("aodnet_forward: input must be 3-channel");
    AodForward f;
    f.input = nn::from_image(hazy);
    f.pre1 = nn::conv2d(net.conv1, f.input);
    f.c1 = nn::relu(f.pre1);
    f.pre2 = nn::conv2d(net.conv2, f.c1);
    f.c2 = nn::relu(f.pre2);
    nn::Tensor cat12 = nn::concat({&f.c1, &f.c2});
    f.pre3 = nn::conv2d(net.conv3, cat12);
    f.c3 = nn::relu(f.pre3);
    nn::Tensor cat23 = nn::concat({&f.c2, &f.c3});
    f.pre4 = nn::conv2d(net.conv4, cat23);
    f.c4 = nn::relu(f.pre4);
    nn::Tensor cat_all = nn::concat({&f.c1, &f.c2, &f.c3, &f.c4});
    f.pre5 = nn::conv2d(net.conv5, cat_all);
    f.k = nn::relu(f.pre5);

    f.j = Image(hazy.width, hazy.height, 3);
    for (size_t i = 0; i < f.j.data.size(); ++i)
        f.j.data[i] = f.k.data[i] * hazy.data[i] - f.k.data[i] + AodNet::offset_b;
    return f;
}

// Inference entry: J clamped to [0,1].
inline Image aodnet_dehaze(const AodNet& net, const Image& hazy) {
    return aodnet_forward_full(net, hazy).j.clamp01();
}

struct AodGrads {
    nn::ConvGrads g1, g2, g3, g4, g5;

    std::vector<nn::ConvGrads*> all() { return {&g1, &g2, &g3, &g4, &g5}; }

    void ensure_shapes(const AodNet& net) {
        auto ls = net.layers();
        auto gs = all();
        for (size_t i = 0; i < ls.size(); ++i) {
            if (gs[i]->weights.size() != ls[i]->weights.size()) {
                gs[i]->weights.assign(ls[i]->weights.size(), 0.0);
                gs[i]->bias.assign(ls[i]->bias.size(), 0.0);
            }
        }
    }

    void scale(double s) {
        for (auto* g : all()) {
            for (double& v : g->weights) v *= s;
            for (double& v : g->bias) v *= s;
        }
    }
};

// Reverse pass from dLoss/dJ to parameter gradients, accumulated in-place.
inline void aodnet_backward(const AodNet& net, const AodForward& f,
                            const Image& dloss_dj, AodGrads& grads) {
    grads.ensure_shapes(net);

    // J = K*I - K + b  ->  dJ/dK = I - 1
    nn::Tensor d_k(f.k.width, f.k.height, 3);
    for (size_t i = 0; i < d_k.data.size(); ++i)
        d_k.data[i] = dloss_dj.data[i] * (f.input.data[i] - 1.0);

    nn::Tensor d_pre5 = nn::relu_backward(f.pre5, d_k);
    nn::Tensor cat_all = nn::concat({&f.c1, &f.c2, &f.c3, &f.c4});
    nn::Tensor d_cat_all;
    nn::conv2d_backward(net.conv5, cat_all, d_pre5, grads.g5, &d_cat_all);

    nn::Tensor d_c1(f.c1.width, f.c1.height, 3), d_c2 = d_c1, d_c3 = d_c1, d_c4 = d_c1;
    nn::split_grad(d_cat_all, {&d_c1, &d_c2, &d_c3, &d_c4});

    nn::Tensor d_pre4 = nn::relu_backward(f.pre4, d_c4);
    nn::Tensor cat23 = nn::concat({&f.c2, &f.c3});
    nn::Tensor d_cat23;
    nn::conv2d_backward(net.conv4, cat23, d_pre4, grads.g4, &d_cat23);
    nn::split_grad(d_cat23, {&d_c2, &d_c3});

    nn::Tensor d_pre3 = nn::relu_backward(f.pre3, d_c3);
    nn::Tensor cat12 = nn::concat({&f.c1, &f.c2});
    nn::Tensor d_cat12;
    nn::conv2d_backward(net.conv3, cat12, d_pre3, grads.g3, &d_cat12);
    nn::split_grad(d_cat12, {&d_c1, &d_c2});

    nn::Tensor d_pre2 = nn::relu_backward(f.pre2, d_c2);
    nn::conv2d_backward(net.conv2, f.c1, d_pre2, grads.g2, &d_c1);

    nn::Tensor d_pre1 = nn::relu_backward(f.pre1, d_c1);
    nn::conv2d_backward(net.conv1, f.input, d_pre1, grads.g1, nullptr);
}

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    double grad_clip_norm = 0.1;
    int batch_size = 8;
    int epochs = 14;
    uint64_t seed = 0;
    int crop_size = 32;
    LossKind loss = LossKind::L2;

    TrainConfig& apply_finetune_preset() {
        learning_rate = 0.002;
        batch_size = 16;
        return *this;
    }
};

struct SgdState {
    AodGrads velocity;
};

// g <- grads + wd*theta; global-norm clip; v <- m*v + g; theta <- theta - lr*v.
inline void sgd_step(AodNet& net, const AodGrads& grads, const TrainConfig& cfg,
                     SgdState& state) {
    state.velocity.ensure_shapes(net);
    AodGrads g = grads;
    g.ensure_shapes(net);

    auto layers = net.layers();
    auto gs = g.all();
    double norm_sq = 0.0;
    for (size_t li = 0; li < layers.size(); ++li) {
        for (size_t i = 0; i < layers[li]->weights.size(); ++i) {
            gs[li]->weights[i] += cfg.weight_decay * layers[li]->weights[i];
            norm_sq += gs[li]->weights[i] * gs[li]->weights[i];
        }
        for (size_t i = 0; i < layers[li]->bias.size(); ++i) {
            gs[li]->bias[i] += cfg.weight_decay * layers[li]->bias[i];
            norm_sq += gs[li]->bias[i] * gs[li]->bias[i];
        }
    }
    double norm = std::sqrt(norm_sq);
    if (norm > cfg.grad_clip_norm && norm > 0.0) g.scale(cfg.grad_clip_norm / norm);

    auto vs = state.velocity.all();
    for (size_t li = 0; li < layers.size(); ++li) {
        for (size_t i = 0; i < layers[li]->weights.size(); ++i) {
            vs[li]->weights[i] = cfg.momentum * vs[li]->weights[i] + gs[li]->weights[i];
            layers[li]->weights[i] -= cfg.learning_rate * vs[li]->weights[i];
        }
        for (size_t i = 0; i < layers[li]->bias.size(); ++i) {
            vs[li]->bias[i] = cfg.momentum * vs[li]->bias[i] + gs[li]->bias[i];
            layers[li]->bias[i] -= cfg.learning_rate * vs[li]->bias[i];
        }
    }
}

struct TrainPair {
    Image hazy;
    Image clean;
    std::string id;
    std::string subset;  // optional "indoor"/"outdoor" tag
};

// Seeded shuffle + random crops; one optimizer step per mini-batch.
inline std::vector<double> aodnet_train(AodNet& net, const std::vector<TrainPair>& data,
                                        const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("aodnet_train: empty dataset");
    for (const auto& p : data)
        if (p.hazy.width < cfg.crop_size || p.hazy.height < cfg.crop_size)
            throw std::invalid_argument("aodnet_train: crop larger than image");

    LossFn loss = make_loss(cfg.loss);
    std::mt19937_64 rng(cfg.seed);
    SgdState state;
    std::vector<double> history;

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            AodGrads grads;
            grads.ensure_shapes(net);
            double batch_loss = 0.0;
            const double inv_b = 1.0 / static_cast<double>(end - start);
            for (size_t bi = start; bi < end; ++bi) {
                const TrainPair& p = data[order[bi]];
                std::uniform_int_distribution<int> dx(0, p.hazy.width - cfg.crop_size);
                std::uniform_int_distribution<int> dy(0, p.hazy.height - cfg.crop_size);
                int x0 = dx(rng), y0 = dy(rng);
                Image hazy(cfg.crop_size, cfg.crop_size, 3);
                Image clean(cfg.crop_size, cfg.crop_size, 3);
                for (int y = 0; y < cfg.crop_size; ++y)
                    for (int x = 0; x < cfg.crop_size; ++x)
                        for (int c = 0; c < 3; ++c) {
                            hazy.at(x, y, c) = p.hazy.at(x0 + x, y0 + y, c);
                            clean.at(x, y, c) = p.clean.at(x0 + x, y0 + y, c);
                        }
                AodForward f = aodnet_forward_full(net, hazy);
                LossValue lv = loss(f.j, clean);
                batch_loss += lv.value * inv_b;
                for (double& g : lv.grad.data) g *= inv_b;
                aodnet_backward(net, f, lv.grad, grads);
            }
            sgd_step(net, grads, cfg, state);
            history.push_back(batch_loss);
        }
    }
    return history;
}

struct EvalRow {
    std::string id;
    std::string subset;
    double psnr_db;
    double ssim;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_psnr_hazy = 0.0;  // baseline: hazy vs clean
};

inline EvalReport aodnet_evaluate(const AodNet& net, const std::vector<TrainPair>& data) {
    if (data.empty()) throw std::invalid_argument("aodnet_evaluate: empty dataset");
    EvalReport rep;
    for (const auto& p : data) {
        Image j = aodnet_dehaze(net, p.hazy);
        EvalRow row{p.id, p.subset, psnr(j, p.clean), ssim(j, p.clean)};
        rep.mean_psnr += row.psnr_db / data.size();
        rep.mean_ssim += row.ssim / data.size();
        rep.mean_psnr_hazy += psnr(p.hazy, p.clean) / data.size();
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// Checkpoint: "AODN", u32 version, per layer u32 {in, out, k}, then all
// parameters as little-endian float32 in declaration order.
inline void aodnet_save(const AodNet& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write("AODN", 4);
    auto put_u32 = [&f](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    put_u32(1);  // version
    for (auto* L : net.layers()) {
        put_u32(static_cast<uint32_t>(L->in_channels));
        put_u32(static_cast<uint32_t>(L->out_channels));
        put_u32(static_cast<uint32_t>(L->kernel_size));
    }
    auto put_f32 = [&f, &put_u32](double v) {
        float fv = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &fv, 4);
        put_u32(bits);
    };
    for (auto* L : net.layers()) {
        for (double w : L->weights) put_f32(w);
        for (double b : L->bias) put_f32(b);
    }
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
}

inline AodNet aodnet_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "AODN", 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    auto get_u32 = [&f, &path]() -> uint32_t {
        unsigned char b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        if (f.gcount() != 4) throw std::runtime_error("truncated checkpoint: " + path);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    };
    if (get_u32() != 1) throw std::runtime_error("unsupported checkpoint version: " + path);
    AodNet net;
    for (auto* L : net.layers()) {
        uint32_t in = get_u32(), out = get_u32(), k = get_u32();
        if (in != static_cast<uint32_t>(L->in_channels) ||
            out != static_cast<uint32_t>(L->out_channels) ||
            k != static_cast<uint32_t>(L->kernel_size))
            throw std::runtime_error("checkpoint layer shape mismatch: " + path);
    }
    auto get_f32 = [&get_u32]() {
        uint32_t bits = get_u32();
        float fv;
        std::memcpy(&fv, &bits, 4);
        return static_cast<double>(fv);
    };
    for (auto* L : net.layers()) {
        for (double& w : L->weights) w = get_f32();
        for (double& b : L->bias) b = get_f32();
    }
    return net;
}

}  // namespace dehaze
