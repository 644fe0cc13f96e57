#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "dehaze/classical.hpp"
#include "dehaze/haze_model.hpp"
#include "dehaze/image.hpp"
#include "dehaze/nn.hpp"

namespace dehaze {

// Identity forward, -lambda * upstream backward.
inline std::vector<double> grl_forward(const std::vector<double>& x) { return x; }

inline std::vector<double> grl_backward(const std::vector<double>& upstream,
                                        double lambda) {
    std::vector<double> out(upstream.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = -lambda * upstream[i];
    return out;
}

// Batch-mean binary cross-entropy with probability clamp.
struct BceResult {
    double value = 0.0;
    std::vector<double> grad;  // d value / d p_i
};

inline BceResult domain_bce(const std::vector<double>& p, const std::vector<int>& y) {
    if (p.size() != y.size() || p.empty())
        throw std::invalid_argument("domain_bce: bad batch");
    const double eps = 1e-7;
    const double inv_n = 1.0 / static_cast<double>(p.size());
    BceResult r;
    r.grad.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        double pi = std::min(1.0 - eps, std::max(eps, p[i]));
        r.value -= (y[i] * std::log(pi) + (1 - y[i]) * std::log(1.0 - pi)) * inv_n;
        r.grad[i] = (pi - y[i]) / (pi * (1.0 - pi)) * inv_n;
    }
    return r;
}

namespace toy {

struct Dense {
    int in = 0, out = 0;
    std::vector<double> w;  // [out][in]
    std::vector<double> b;  // [out]

    Dense() = default;
    Dense(int in_, int out_) : in(in_), out(out_),
        w(static_cast<size_t>(in_) * out_, 0.0), b(static_cast<size_t>(out_), 0.0) {}

    std::vector<double> forward(const std::vector<double>& x) const {
        std::vector<double> y(out);
        for (int o = 0; o < out; ++o) {
            double acc = b[o];
            for (int i = 0; i < in; ++i) acc += w[static_cast<size_t>(o) * in + i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    std::vector<double> backward(const std::vector<double>& x,
                                 const std::vector<double>& d_y,
                                 Dense& grads) const {
        std::vector<double> d_x(in, 0.0);
        for (int o = 0; o < out; ++o) {
            grads.b[o] += d_y[o];
            for (int i = 0; i < in; ++i) {
                grads.w[static_cast<size_t>(o) * in + i] += d_y[o] * x[i];
                d_x[i] += d_y[o] * w[static_cast<size_t>(o) * in + i];
            }
        }
        return d_x;
    }

    void init(std::mt19937_64& rng, double std_dev) {
        std::normal_distribution<double> dist(0.0, std_dev);
        for (double& v : w) v = dist(rng);
        for (double& v : b) v = 0.0;
    }
};

}  // namespace toy

// Feature extractor (theta_res), classification head (theta_head) and
// domain classifier (theta_domain) of the desk-scale adaptation setup.
struct ToyModel {
    static constexpr int n_classes = 2;
    static constexpr int feat_dim = 8;

    nn::ConvLayer conv1{3, 8, 3};
    nn::ConvLayer conv2{8, 8, 3};
    toy::Dense head{feat_dim, n_classes};
    toy::Dense dom1{feat_dim, 16};
    toy::Dense dom2{16, 1};
};

inline ToyModel toy_model_init(uint64_t seed) {
    ToyModel m;
    std::mt19937_64 rng(seed);
    nn::init_gaussian(m.conv1, rng, 0.1);
    nn::init_gaussian(m.conv2, rng, 0.1);
    m.head.init(rng, 0.1);
    m.dom1.init(rng, 0.1);
    m.dom2.init(rng, 0.1);
    return m;
}

struct ToyGrads {
    nn::ConvGrads conv1, conv2;
    toy::Dense head, dom1, dom2;

    explicit ToyGrads(const ToyModel& m)
        : head(m.head.in, m.head.out), dom1(m.dom1.in, m.dom1.out),
          dom2(m.dom2.in, m.dom2.out) {
        conv1.weights.assign(m.conv1.weights.size(), 0.0);
        conv1.bias.assign(m.conv1.bias.size(), 0.0);
        conv2.weights.assign(m.conv2.weights.size(), 0.0);
        conv2.bias.assign(m.conv2.bias.size(), 0.0);
    }
};

struct ToyFeatureCache {
    nn::Tensor input, pre1, a1, p1, pre2, a2, p2;
    std::vector<double> feat;
};

inline ToyFeatureCache toy_features(const ToyModel& m, const Image& img) {
    ToyFeatureCache c;
    c.input = nn::from_image(img);
    c.pre1 = nn::conv2d(m.conv1, c.input);
    c.a1 = nn::relu(c.pre1);
    c.p1 = nn::avgpool2(c.a1);
    c.pre2 = nn::conv2d(m.conv2, c.p1);
    c.a2 = nn::relu(c.pre2);
    c.p2 = nn::avgpool2(c.a2);
    c.feat.assign(ToyModel::feat_dim, 0.0);
    const double inv = 1.0 / (static_cast<double>(c.p2.width) * c.p2.height);
    for (int y = 0; y < c.p2.height; ++y)
        for (int x = 0; x < c.p2.width; ++x)
            for (int ch = 0; ch < c.p2.channels; ++ch)
                c.feat[ch] += c.p2.at(x, y, ch) * inv;
    return c;
}

// d(loss)/d(feature vector) back to conv parameters.
inline void toy_features_backward(const ToyModel& m, const ToyFeatureCache& c,
                                  const std::vector<double>& d_feat, ToyGrads& g) {
    nn::Tensor d_p2(c.p2.width, c.p2.height, c.p2.channels);
    const double inv = 1.0 / (static_cast<double>(c.p2.width) * c.p2.height);
    for (int y = 0; y < c.p2.height; ++y)
        for (int x = 0; x < c.p2.width; ++x)
            for (int ch = 0; ch < c.p2.channels; ++ch)
                d_p2.at(x, y, ch) = d_feat[ch] * inv;
    nn::Tensor d_a2 = nn::avgpool2_backward(c.a2, d_p2);
    nn::Tensor d_pre2 = nn::relu_backward(c.pre2, d_a2);
    nn::Tensor d_p1;
    nn::conv2d_backward(m.conv2, c.p1, d_pre2, g.conv2, &d_p1);
    nn::Tensor d_a1 = nn::avgpool2_backward(c.a1, d_p1);
    nn::Tensor d_pre1 = nn::relu_backward(c.pre1, d_a1);
    nn::conv2d_backward(m.conv1, c.input, d_pre1, g.conv1, nullptr);
}

inline std::vector<double> softmax(const std::vector<double>& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - zmax);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Labeled source examples and unlabeled target examples for one step.
struct DomainBatch {
    std::vector<const Image*> source;
    std::vector<int> source_labels;
    std::vector<const Image*> target;
};

struct JointStepResult {
    double task_loss = 0.0;
    double domain_loss = 0.0;
};

inline double toy_domain_prob(const ToyModel& m, const std::vector<double>& feat) {
    std::vector<double> h = m.dom1.forward(grl_forward(feat));
    for (double& v : h) v = std::max(0.0, v);
    return sigmoid(m.dom2.forward(h)[0]);
}

inline int toy_predict(const ToyModel& m, const Image& img) {
    ToyFeatureCache c = toy_features(m, img);
    std::vector<double> p = softmax(m.head.forward(c.feat));
    int best = 0;
    for (size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = static_cast<int>(i);
    return best;
}

// One joint update: task cross-entropy on source only, domain BCE on
// source+target routed through the GRL, plain gradient descent.
inline JointStepResult joint_step(ToyModel& m, const DomainBatch& batch,
                                  double lambda, double lr) {
    if (batch.source.empty())
        throw std::invalid_argument("joint_step: batch has no source examples");

    ToyGrads g(m);
    JointStepResult res;

    struct Pass {
        ToyFeatureCache cache;
        int domain_label;
        std::vector<double> d_feat_task;
        std::vector<double> dom_hidden_pre;
        std::vector<double> dom_hidden;
        double dom_p = 0.0;
    };
    std::vector<Pass> passes;

    const double inv_src = 1.0 / static_cast<double>(batch.source.size());
    for (size_t i = 0; i < batch.source.size(); ++i) {
        Pass pass;
        pass.cache = toy_features(m, *batch.source[i]);
        pass.domain_label = 0;
        // task head: softmax cross-entropy, source only
        std::vector<double> logits = m.head.forward(pass.cache.feat);
        std::vector<double> p = softmax(logits);
        int label = batch.source_labels[i];
        res.task_loss -= std::log(std::max(p[label], 1e-12)) * inv_src;
        std::vector<double> d_logits(p.size());
        for (size_t k = 0; k < p.size(); ++k)
            d_logits[k] = (p[k] - (static_cast<int>(k) == label ? 1.0 : 0.0)) * inv_src;
        pass.d_feat_task = m.head.backward(pass.cache.feat, d_logits, g.head);
        passes.push_back(std::move(pass));
    }
    for (const Image* img : batch.target) {
        Pass pass;
        pass.cache = toy_features(m, *img);
        pass.domain_label = 1;
        pass.d_feat_task.assign(ToyModel::feat_dim, 0.0);
        passes.push_back(std::move(pass));
    }

    // Domain classifier over the whole batch.
    std::vector<double> probs;
    std::vector<int> dlabels;
    for (Pass& pass : passes) {
        pass.dom_hidden_pre = m.dom1.forward(grl_forward(pass.cache.feat));
        pass.dom_hidden = pass.dom_hidden_pre;
        for (double& v : pass.dom_hidden) v = std::max(0.0, v);
        pass.dom_p = sigmoid(m.dom2.forward(pass.dom_hidden)[0]);
        probs.push_back(pass.dom_p);
        dlabels.push_back(pass.domain_label);
    }
    BceResult bce = domain_bce(probs, dlabels);
    res.domain_loss = bce.value;

    for (size_t i = 0; i < passes.size(); ++i) {
        Pass& pass = passes[i];
        // d(bce)/d(logit) via sigmoid
        double d_logit = bce.grad[i] * pass.dom_p * (1.0 - pass.dom_p);
        std::vector<double> d_hidden =
            m.dom2.backward(pass.dom_hidden, {d_logit}, g.dom2);
        for (size_t k = 0; k < d_hidden.size(); ++k)
            if (pass.dom_hidden_pre[k] <= 0.0) d_hidden[k] = 0.0;
        std::vector<double> d_feat_dom =
            m.dom1.backward(pass.cache.feat, d_hidden, g.dom1);

        // GRL: features receive task gradient minus lambda times the
        // domain gradient; theta_domain already received the +gradient.
        std::vector<double> d_feat = grl_backward(d_feat_dom, lambda);
        for (size_t k = 0; k < d_feat.size(); ++k) d_feat[k] += pass.d_feat_task[k];
        bool any = false;
        for (double v : d_feat)
            if (v != 0.0) { any = true; break; }
        if (any) toy_features_backward(m, pass.cache, d_feat, g);
    }

    auto step_dense = [lr](toy::Dense& d, const toy::Dense& gd) {
        for (size_t i = 0; i < d.w.size(); ++i) d.w[i] -= lr * gd.w[i];
        for (size_t i = 0; i < d.b.size(); ++i) d.b[i] -= lr * gd.b[i];
    };
    auto step_conv = [lr](nn::ConvLayer& L, const nn::ConvGrads& gc) {
        for (size_t i = 0; i < L.weights.size(); ++i) L.weights[i] -= lr * gc.weights[i];
        for (size_t i = 0; i < L.bias.size(); ++i) L.bias[i] -= lr * gc.bias[i];
    };
    step_conv(m.conv1, g.conv1);
    step_conv(m.conv2, g.conv2);
    step_dense(m.head, g.head);
    step_dense(m.dom1, g.dom1);
    step_dense(m.dom2, g.dom2);
    return res;
}

// ---- Toy source/target data -------------------------------------------------

struct ToyDataset {
    std::vector<Image> images;
    std::vector<int> labels;  // source: training labels; target: eval-only
};

struct ToyDomains {
    ToyDataset source;          // clean renders, labeled
    ToyDataset target;          // hazed (variant 1) or dehazed-hazed (variant 2)
    std::vector<Image> target_clean;  // pre-haze counterparts, for PSNR checks
    int variant = 1;
};

namespace toy {

// 32x32 render of a filled circle or square with randomized geometry.
inline Image render_shape(std::mt19937_64& rng, int label) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int n = 32;
    double bg = 0.15 + 0.2 * uni(rng);
    double fg = 0.6 + 0.35 * uni(rng);
    double cx = 10.0 + 12.0 * uni(rng);
    double cy = 10.0 + 12.0 * uni(rng);
    double half = 4.0 + 5.0 * uni(rng);
    Image img(n, n, 3);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            bool inside;
            if (label == 0) {  // circle
                double dx = x - cx, dy = y - cy;
                inside = dx * dx + dy * dy <= half * half;
            } else {  // square
                inside = std::abs(x - cx) <= half && std::abs(y - cy) <= half;
            }
            double v = inside ? fg : bg;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
        }
    }
    // mild sensor noise so tiles are not flat
    std::normal_distribution<double> noise(0.0, 0.01);
    for (double& v : img.data) v = std::min(1.0, std::max(0.0, v + noise(rng)));
    return img;
}

}  // namespace toy

// Source: clean labeled renders. Target variant 1: hazed renders.
// Variant 2: variant-1 images passed through DCP dehazing.
inline ToyDomains make_toy_domains(uint64_t seed, int n_per_domain, int variant = 1) {
    std::mt19937_64 rng(seed);
    ToyDomains d;
    d.variant = variant;
    for (int i = 0; i < n_per_domain; ++i) {
        int label = i % 2;
        d.source.images.push_back(toy::render_shape(rng, label));
        d.source.labels.push_back(label);
    }
    DcpConfig dcp_cfg;
    dcp_cfg.guided_radius = 8;
    for (int i = 0; i < n_per_domain; ++i) {
        int label = i % 2;
        Image clean = toy::render_shape(rng, label);
        HazeParams hp = random_haze_params(rng(), {0.75, 0.95}, {0.8, 2.0});
        DepthMap depth = gen_depth(DepthKind::BlobNoise, clean.width, clean.height, rng());
        TransmissionMap t = transmission_from_depth(depth, hp.beta);
        Image hazy = synthesize_haze(clean, t, hp.A);
        d.target_clean.push_back(clean);
        d.target.images.push_back(variant == 2 ? dcp_dehaze(hazy, dcp_cfg) : hazy);
        d.target.labels.push_back(label);
    }
    return d;
}

struct AdaptationReport {
    uint64_t seed = 0;
    double lambda = 0.0;
    int iters = 0;
    int target_variant = 1;
    double baseline_target_acc = 0.0;
    double adapted_target_acc = 0.0;
    double domain_acc_final = 0.0;
};

// Trains a lambda=0 baseline and an adapted model from identical
// initialization and batch order, then scores both on held-out targets.
inline AdaptationReport run_adaptation_experiment(uint64_t seed, double lambda,
                                                  int iters, int target_variant = 1,
                                                  double lr = 0.05) {
    const int n_train = 64, n_test = 32;
    ToyDomains train = make_toy_domains(seed, n_train, target_variant);
    ToyDomains test = make_toy_domains(seed + 1000003, n_test, target_variant);

    const int batch_src = 4, batch_tgt = 4;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<size_t> pick(0, static_cast<size_t>(n_train) - 1);
    std::vector<DomainBatch> batches(iters);
    for (int it = 0; it < iters; ++it) {
        DomainBatch& b = batches[it];
        for (int i = 0; i < batch_src; ++i) {
            size_t idx = pick(rng);
            b.source.push_back(&train.source.images[idx]);
            b.source_labels.push_back(train.source.labels[idx]);
        }
        for (int i = 0; i < batch_tgt; ++i)
            b.target.push_back(&train.target.images[pick(rng)]);
    }

    ToyModel baseline = toy_model_init(seed);
    ToyModel adapted = baseline;
    for (const DomainBatch& b : batches) joint_step(baseline, b, 0.0, lr);
    for (const DomainBatch& b : batches) joint_step(adapted, b, lambda, lr);

    auto accuracy = [](const ToyModel& m, const ToyDataset& ds) {
        int hit = 0;
        for (size_t i = 0; i < ds.images.size(); ++i)
            if (toy_predict(m, ds.images[i]) == ds.labels[i]) ++hit;
        return static_cast<double>(hit) / static_cast<double>(ds.images.size());
    };

    AdaptationReport rep;
    rep.seed = seed;
    rep.lambda = lambda;
    rep.iters = iters;
    rep.target_variant = target_variant;
    rep.baseline_target_acc = accuracy(baseline, test.target);
    rep.adapted_target_acc = accuracy(adapted, test.target);

    int dom_hit = 0, dom_total = 0;
    for (const Image& img : test.source.images) {
        ToyFeatureCache c = toy_features(adapted, img);
        if (toy_domain_prob(adapted, c.feat) < 0.5) ++dom_hit;
        ++dom_total;
    }
    for (const Image& img : test.target.images) {
        ToyFeatureCache c = toy_features(adapted, img);
        if (toy_domain_prob(adapted, c.feat) >= 0.5) ++dom_hit;
        ++dom_total;
    }
    rep.domain_acc_final = static_cast<double>(dom_hit) / dom_total;
    return rep;
}

}  // namespace dehaze
