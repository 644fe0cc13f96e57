#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dehaze/aodnet.hpp"
#include "dehaze/haze_model.hpp"
#include "test_util.hpp"

using namespace dehaze;

namespace {

std::vector<TrainPair> synthetic_dataset(int n, int size, uint64_t seed) {
    std::vector<TrainPair> data;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
        Image clean = testutil::random_image(size, size, 3, rng());
        Kernel k = gaussian_kernel(1.5);
        clean = convolve(clean, k);  // natural-ish smooth content
        HazeParams hp = random_haze_params(rng());
        DepthMap depth = gen_depth(DepthKind::BlobNoise, size, size, rng());
        TransmissionMap t = transmission_from_depth(depth, hp.beta);
        TrainPair p;
        p.hazy = synthesize_haze(clean, t, hp.A);
        p.clean = clean;
        p.id = "img" + std::to_string(i);
        data.push_back(std::move(p));
    }
    return data;
}

}  // namespace

TEST_CASE("init is seeded and Gaussian-scaled") {
    AodNet a = aodnet_init(1);
    AodNet b = aodnet_init(1);
    AodNet c = aodnet_init(2);
    bool differ = false;
    auto la = a.layers(), lb = b.layers(), lc = c.layers();
    double sum = 0.0, sum_sq = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < la.size(); ++i) {
        for (size_t j = 0; j < la[i]->weights.size(); ++j) {
            CHECK(la[i]->weights[j] == lb[i]->weights[j]);
            if (la[i]->weights[j] != lc[i]->weights[j]) differ = true;
            sum += la[i]->weights[j];
            sum_sq += la[i]->weights[j] * la[i]->weights[j];
            ++n;
        }
        for (double bias : la[i]->bias) CHECK(bias == 0.0);
    }
    CHECK(differ);
    double std_dev = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
    CHECK(std_dev > 0.008);
    CHECK(std_dev < 0.012);
}

TEST_CASE("forward output algebra") {
    Image hazy = testutil::random_image(8, 8, 3, 3);

    // forced K = 1 -> J = I
    AodForward f = aodnet_forward_full(aodnet_init(0), hazy);
    Image j_manual(8, 8, 3);
    nn::Tensor k_one(8, 8, 3, 1.0);
    for (size_t i = 0; i < j_manual.data.size(); ++i)
        j_manual.data[i] = k_one.data[i] * hazy.data[i] - k_one.data[i] + 1.0;
    CHECK(testutil::max_abs_diff(j_manual, hazy) < 1e-12);

    // zero-initialized network: K = 0 after ReLU, J = 1
    AodNet zero;
    AodForward fz = aodnet_forward_full(zero, hazy);
    for (double v : fz.k.data) CHECK(v == 0.0);
    for (double v : fz.j.data) CHECK(v == 1.0);

    Image gray(8, 8, 1, 0.5);
    CHECK_THROWS(aodnet_forward_full(zero, gray));
}

TEST_CASE("backward gradients match finite differences") {
    AodNet net = aodnet_init(4);
    // widen the parameter spread so deep-layer gradients sit well above
    // finite-difference cancellation noise
    {
        std::mt19937_64 prng(99);
        std::uniform_real_distribution<double> uni(-0.5, 0.5);
        for (nn::ConvLayer* l : net.layers()) {
            for (double& w : l->weights) w = uni(prng);
            for (double& b : l->bias) b = 0.1 * uni(prng);
        }
    }
    Image hazy = testutil::random_image(8, 8, 3, 5);
    Image clean = testutil::random_image(8, 8, 3, 6);

    AodForward f = aodnet_forward_full(net, hazy);
    LossValue lv = l2_loss(f.j, clean);
    AodGrads grads;
    aodnet_backward(net, f, lv.grad, grads);

    std::mt19937_64 rng(7);
    auto layers = net.layers();
    auto gs = grads.all();
    const double eps = 1e-5;
    double max_rel = 0.0;
    for (int s = 0; s < 64; ++s) {
        size_t li = rng() % layers.size();
        bool is_bias = (rng() % 8) == 0;
        size_t pi = is_bias ? rng() % layers[li]->bias.size()
                            : rng() % layers[li]->weights.size();
        double& param = is_bias ? layers[li]->bias[pi] : layers[li]->weights[pi];
        double orig = param;
        param = orig + eps;
        double up = l2_loss(aodnet_forward_full(net, hazy).j, clean).value;
        param = orig - eps;
        double dn = l2_loss(aodnet_forward_full(net, hazy).j, clean).value;
        param = orig;
        double numeric = (up - dn) / (2.0 * eps);
        double analytic = is_bias ? gs[li]->bias[pi] : gs[li]->weights[pi];
        double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
    CHECK(max_rel < 1e-3);
}

TEST_CASE("backward linearity and zero propagation") {
    AodNet net = aodnet_init(8);
    Image hazy = testutil::random_image(8, 8, 3, 9);
    AodForward f = aodnet_forward_full(net, hazy);

    Image zero_grad(8, 8, 3, 0.0);
    AodGrads gz;
    aodnet_backward(net, f, zero_grad, gz);
    for (auto* g : gz.all()) {
        for (double v : g->weights) CHECK(v == 0.0);
        for (double v : g->bias) CHECK(v == 0.0);
    }

    Image dj = testutil::random_image(8, 8, 3, 10, -1.0, 1.0);
    Image dj2 = dj;
    for (double& v : dj2.data) v *= 2.0;
    AodGrads g1, g2;
    aodnet_backward(net, f, dj, g1);
    aodnet_backward(net, f, dj2, g2);
    auto a1 = g1.all(), a2 = g2.all();
    for (size_t i = 0; i < a1.size(); ++i)
        for (size_t j = 0; j < a1[i]->weights.size(); ++j)
            CHECK_THAT(a2[i]->weights[j],
                       Catch::Matchers::WithinAbs(2.0 * a1[i]->weights[j],
                                                  1e-12 + 1e-9 * std::abs(a1[i]->weights[j])));
}

TEST_CASE("sgd_step rules") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.momentum = 0.0;
    cfg.learning_rate = 0.1;
    cfg.grad_clip_norm = 1e18;

    AodNet net = aodnet_init(11);
    AodNet before = net;
    AodGrads zero;
    zero.ensure_shapes(net);
    SgdState state;
    sgd_step(net, zero, cfg, state);
    auto ln = net.layers(), lb = before.layers();
    for (size_t i = 0; i < ln.size(); ++i)
        for (size_t j = 0; j < ln[i]->weights.size(); ++j)
            CHECK(ln[i]->weights[j] == lb[i]->weights[j]);

    // single-parameter arithmetic: theta = 1, g = 1, lr = 0.1 -> 0.9
    AodNet single;
    single.conv1.weights[0] = 1.0;
    AodGrads g;
    g.ensure_shapes(single);
    g.g1.weights[0] = 1.0;
    SgdState st2;
    sgd_step(single, g, cfg, st2);
    CHECK_THAT(single.conv1.weights[0], Catch::Matchers::WithinAbs(0.9, 1e-12));
}

TEST_CASE("gradient clipping bounds the global norm") {
    TrainConfig cfg;  // clip 0.1
    cfg.weight_decay = 0.0;
    AodNet net = aodnet_init(12);
    AodGrads g;
    g.ensure_shapes(net);
    // construct ||g|| = 10
    double norm_sq = 0.0;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto* gg : g.all())
        for (double& v : gg->weights) {
            v = dist(rng);
            norm_sq += v * v;
        }
    double scale = 10.0 / std::sqrt(norm_sq);
    for (auto* gg : g.all())
        for (double& v : gg->weights) v *= scale;

    AodNet before = net;
    SgdState state;
    sgd_step(net, g, cfg, state);
    // velocity after one step equals the clipped gradient; check its norm
    double vnorm_sq = 0.0;
    for (auto* vv : state.velocity.all()) {
        for (double v : vv->weights) vnorm_sq += v * v;
        for (double v : vv->bias) vnorm_sq += v * v;
    }
    CHECK_THAT(std::sqrt(vnorm_sq), Catch::Matchers::WithinAbs(0.1, 1e-9));
}

TEST_CASE("training reduces the loss on a small synthetic set") {
    auto data = synthetic_dataset(24, 32, 100);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.crop_size = 16;
    cfg.seed = 1;
    AodNet net = aodnet_init(1);
    std::vector<double> history = aodnet_train(net, data, cfg);
    REQUIRE(history.size() >= 4);
    size_t w = history.size() / 3;
    double head = 0.0, tail = 0.0;
    for (size_t i = 0; i < w; ++i) head += history[i] / w;
    for (size_t i = history.size() - w; i < history.size(); ++i) tail += history[i] / w;
    CHECK(tail < head);
}

TEST_CASE("training is deterministic per seed; lr 0 freezes parameters") {
    auto data = synthetic_dataset(8, 24, 200);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.crop_size = 16;
    cfg.seed = 3;

    AodNet n1 = aodnet_init(5);
    AodNet n2 = aodnet_init(5);
    auto h1 = aodnet_train(n1, data, cfg);
    auto h2 = aodnet_train(n2, data, cfg);
    REQUIRE(h1.size() == h2.size());
    for (size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);

    cfg.learning_rate = 0.0;
    AodNet frozen = aodnet_init(5);
    AodNet before = frozen;
    aodnet_train(frozen, data, cfg);
    auto lf = frozen.layers(), lb = before.layers();
    for (size_t i = 0; i < lf.size(); ++i)
        for (size_t j = 0; j < lf[i]->weights.size(); ++j)
            CHECK(lf[i]->weights[j] == lb[i]->weights[j]);

    CHECK_THROWS(aodnet_train(frozen, {}, cfg));
    auto tiny = synthetic_dataset(2, 8, 1);
    cfg.crop_size = 16;
    CHECK_THROWS(aodnet_train(frozen, tiny, cfg));
}

TEST_CASE("evaluate reports PSNR/SSIM rows") {
    auto data = synthetic_dataset(4, 24, 300);
    // haze-free pairs: hazy == clean
    for (auto& p : data) p.hazy = p.clean;
    AodNet net = aodnet_init(6);
    EvalReport rep = aodnet_evaluate(net, data);
    REQUIRE(rep.rows.size() == 4);
    CHECK(std::isinf(rep.mean_psnr_hazy));

    CHECK_THROWS(aodnet_evaluate(net, {}));
}

TEST_CASE("checkpoint round trip") {
    namespace fs = std::filesystem;
    AodNet net = aodnet_init(42);
    fs::path path = fs::temp_directory_path() / "aodnet_test.ckpt";
    aodnet_save(net, path.string());
    AodNet back = aodnet_load(path.string());
    auto ln = net.layers(), lb = back.layers();
    for (size_t i = 0; i < ln.size(); ++i)
        for (size_t j = 0; j < ln[i]->weights.size(); ++j)
            CHECK_THAT(lb[i]->weights[j],
                       Catch::Matchers::WithinAbs(ln[i]->weights[j], 1e-7));

    // corrupt magic rejected
    fs::path bad = fs::temp_directory_path() / "aodnet_bad.ckpt";
    std::ofstream(bad.string(), std::ios::binary) << "NOPE";
    CHECK_THROWS(aodnet_load(bad.string()));
}

TEST_CASE("finetune preset") {
    TrainConfig cfg;
    cfg.apply_finetune_preset();
    CHECK(cfg.learning_rate == 0.002);
    CHECK(cfg.batch_size == 16);
}
