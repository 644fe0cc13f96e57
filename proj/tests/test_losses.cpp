#include <catch2/catch_amalgamated.hpp>

#include "dehaze/losses.hpp"
#include "test_util.hpp"

using namespace dehaze;

namespace {

// Random pair with samples pushed away from equality so the l1 sign and
// the relative-error denominator behave.
std::pair<Image, Image> random_pair(uint64_t seed) {
    Image pred = testutil::random_image(8, 8, 3, seed, 0.05, 0.95);
    Image target = testutil::random_image(8, 8, 3, seed + 9000, 0.05, 0.95);
    return {pred, target};
}

}  // namespace

TEST_CASE("l1 loss analytic cases") {
    auto [pred, target] = random_pair(1);
    LossValue same = l1_loss(pred, pred);
    CHECK(same.value == 0.0);
    for (double g : same.grad.data) CHECK(g == 0.0);

    Image shifted = target;
    for (double& v : shifted.data) v += 0.2;
    LossValue lv = l1_loss(shifted, target);
    CHECK_THAT(lv.value, Catch::Matchers::WithinAbs(0.2, 1e-12));
    for (double g : lv.grad.data)
        CHECK_THAT(g, Catch::Matchers::WithinAbs(1.0 / shifted.data.size(), 1e-15));
}

TEST_CASE("l2 loss analytic cases") {
    auto [pred, target] = random_pair(2);
    CHECK(l2_loss(pred, pred).value == 0.0);

    Image shifted = target;
    for (double& v : shifted.data) v += 0.1;
    CHECK_THAT(l2_loss(shifted, target).value, Catch::Matchers::WithinAbs(0.01, 1e-12));

    Image small(4, 4, 3);
    CHECK_THROWS(l2_loss(pred, small));
}

TEST_CASE("l2 finite differences are near-exact") {
    auto [pred, target] = random_pair(3);
    double err = finite_diff_check(make_loss(LossKind::L2), pred, target, 1e-4, 32, 3);
    CHECK(err < 1e-6);
}

TEST_CASE("l1 finite differences") {
    auto [pred, target] = random_pair(4);
    double err = finite_diff_check(make_loss(LossKind::L1), pred, target, 1e-4, 32, 4);
    CHECK(err < 1e-3);
}

TEST_CASE("ssim loss value cases") {
    auto [pred, target] = random_pair(5);
    CHECK_THAT(ssim_loss(pred, pred).value, Catch::Matchers::WithinAbs(0.0, 1e-9));

    Image a(16, 16, 3, 0.5);
    Image b(16, 16, 3, 0.6);
    CHECK_THAT(ssim_loss(a, b).value,
               Catch::Matchers::WithinAbs(1.0 - 0.61 / 0.62, 1e-9));
}

TEST_CASE("ssim loss gradient vs finite differences") {
    for (uint64_t seed : {10, 11, 12, 13}) {
        auto [pred, target] = random_pair(seed);
        SsimConfig cfg;
        cfg.sigma_g = 1.5;
        LossFn loss = [cfg](const Image& p, const Image& t) {
            return ssim_loss(p, t, cfg);
        };
        double err = finite_diff_check(loss, pred, target, 1e-4, 32, seed);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("ssim loss gradient at default sigma") {
    auto [pred, target] = random_pair(20);
    double err = finite_diff_check(make_loss(LossKind::Ssim), pred, target, 1e-4, 32, 20);
    CHECK(err < 1e-3);
}

TEST_CASE("ms_ssim loss reduction and gradient") {
    auto [pred, target] = random_pair(30);
    CHECK_THAT(ms_ssim_loss(pred, pred).value, Catch::Matchers::WithinAbs(0.0, 1e-9));

    MsSsimConfig single;
    single.sigmas = {5.0};
    CHECK_THAT(ms_ssim_loss(pred, target, single).value,
               Catch::Matchers::WithinAbs(ssim_loss(pred, target, {5.0, 0.01, 0.03}).value,
                                          1e-9));

    MsSsimConfig small;
    small.sigmas = {0.5, 1.0, 2.0};
    LossFn loss = [small](const Image& p, const Image& t) {
        return ms_ssim_loss(p, t, small);
    };
    double err = finite_diff_check(loss, pred, target, 1e-4, 32, 30);
    CHECK(err < 1e-3);
}

TEST_CASE("mixed l2 loss reductions") {
    auto [pred, target] = random_pair(40);
    CHECK_THAT(ms_ssim_l2_loss(pred, pred).value, Catch::Matchers::WithinAbs(0.0, 1e-9));

    // alpha = 0: smoothed l2 alone; constant difference passes through
    MixedLossConfig cfg;
    cfg.alpha = 0.0;
    Image shifted = target;
    for (double& v : shifted.data) v += 0.1;
    CHECK_THAT(ms_ssim_l2_loss(shifted, target, cfg).value,
               Catch::Matchers::WithinAbs(0.01, 1e-9));
}

TEST_CASE("mixed l1 alpha=1 equals ms_ssim loss") {
    auto [pred, target] = random_pair(41);
    MixedLossConfig cfg;
    cfg.alpha = 1.0;
    CHECK_THAT(ms_ssim_l1_loss(pred, target, cfg).value,
               Catch::Matchers::WithinAbs(ms_ssim_loss(pred, target, cfg.ms_cfg).value,
                                          1e-12));
}

TEST_CASE("mixing linearity against standalone operations") {
    auto [pred, target] = random_pair(42);
    MixedLossConfig cfg;  // alpha 0.1
    double ms = ms_ssim(pred, target, cfg.ms_cfg);

    Kernel k = gaussian_kernel(cfg.weighting_sigma());
    Image e(pred.width, pred.height, pred.channels);
    for (size_t i = 0; i < e.data.size(); ++i) {
        double d = pred.data[i] - target.data[i];
        e.data[i] = d * d;
    }
    Image smoothed = convolve(e, k);
    double term = 0.0;
    for (double v : smoothed.data) term += v / smoothed.data.size();

    CHECK_THAT(ms_ssim_l2_loss(pred, target, cfg).value,
               Catch::Matchers::WithinAbs(0.1 * (1.0 - ms) + 0.9 * term, 1e-9));
}

TEST_CASE("mixed losses gradient vs finite differences") {
    for (uint64_t seed : {50, 51}) {
        auto [pred, target] = random_pair(seed);
        MixedLossConfig fast;
        fast.ms_cfg.sigmas = {0.5, 1.0, 2.0};
        fast.alpha = 0.1;
        LossFn l2mix = [fast](const Image& p, const Image& t) {
            return ms_ssim_l2_loss(p, t, fast);
        };
        CHECK(finite_diff_check(l2mix, pred, target, 1e-4, 32, seed) < 1e-3);

        MixedLossConfig l1cfg = fast;
        l1cfg.alpha = 0.025;
        LossFn l1mix = [l1cfg](const Image& p, const Image& t) {
            return ms_ssim_l1_loss(p, t, l1cfg);
        };
        CHECK(finite_diff_check(l1mix, pred, target, 1e-4, 32, seed) < 1e-3);
    }
}

TEST_CASE("losses are nonnegative on [0,1] inputs") {
    for (uint64_t seed : {60, 61, 62}) {
        auto [pred, target] = random_pair(seed);
        for (auto kind : {LossKind::L1, LossKind::L2, LossKind::Ssim, LossKind::MsSsim,
                          LossKind::MsSsimL1, LossKind::MsSsimL2})
            CHECK(make_loss(kind)(pred, target).value >= 0.0);
    }
}

TEST_CASE("finite_diff_check flags a corrupted gradient") {
    auto [pred, target] = random_pair(70);
    LossFn corrupted = [](const Image& p, const Image& t) {
        LossValue lv = l2_loss(p, t);
        for (double& g : lv.grad.data) g *= 2.0;
        return lv;
    };
    double err = finite_diff_check(corrupted, pred, target, 1e-4, 32, 70);
    CHECK_THAT(err, Catch::Matchers::WithinAbs(0.5, 1e-3));
}

TEST_CASE("loss selector strings") {
    CHECK(loss_kind_from_string("l1") == LossKind::L1);
    CHECK(loss_kind_from_string("msssim_l2") == LossKind::MsSsimL2);
    CHECK_THROWS(loss_kind_from_string("huber"));
    for (auto kind : {LossKind::L1, LossKind::L2, LossKind::Ssim, LossKind::MsSsim,
                      LossKind::MsSsimL1, LossKind::MsSsimL2})
        CHECK(loss_kind_from_string(to_string(kind)) == kind);
}
