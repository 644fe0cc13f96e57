#include <catch2/catch_amalgamated.hpp>

#include "dehaze/domain_adapt.hpp"
#include "dehaze/metrics.hpp"
#include "test_util.hpp"

using namespace dehaze;

TEST_CASE("GRL forward is the identity") {
    std::vector<double> x{0.25, -3.0, 0.0, 1e9};
    CHECK(grl_forward(x) == x);
}

TEST_CASE("GRL backward is exact -lambda scaling") {
    CHECK(grl_backward({0.3}, 1.0) == std::vector<double>{-0.3});
    CHECK(grl_backward({2.0, -4.0}, 0.5) == std::vector<double>({-1.0, 2.0}));
    std::vector<double> g{1.5, -0.25};
    auto z = grl_backward(g, 0.0);
    for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("domain BCE analytic values and gradient") {
    BceResult r = domain_bce({0.5}, {1});
    CHECK_THAT(r.value, Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));

    BceResult close = domain_bce({1.0 - 1e-7, 1e-7}, {1, 0});
    CHECK(close.value < 1e-6);

    // finite differences
    std::vector<double> p{0.3, 0.7, 0.55, 0.12};
    std::vector<int> y{1, 0, 1, 0};
    BceResult base = domain_bce(p, y);
    const double eps = 1e-6;
    for (size_t i = 0; i < p.size(); ++i) {
        auto up = p, dn = p;
        up[i] += eps;
        dn[i] -= eps;
        double numeric = (domain_bce(up, y).value - domain_bce(dn, y).value) / (2 * eps);
        double denom = std::max({std::abs(base.grad[i]), std::abs(numeric), 1e-8});
        CHECK(std::abs(base.grad[i] - numeric) / denom < 1e-5);
    }

    CHECK_THROWS(domain_bce({}, {}));
    CHECK_THROWS(domain_bce({0.5}, {1, 0}));
}

TEST_CASE("lambda 0 leaves features on the task-only trajectory") {
    ToyDomains d = make_toy_domains(1, 8);
    DomainBatch batch;
    for (size_t i = 0; i < 4; ++i) {
        batch.source.push_back(&d.source.images[i]);
        batch.source_labels.push_back(d.source.labels[i]);
        batch.target.push_back(&d.target.images[i]);
    }

    ToyModel with_domain = toy_model_init(7);
    ToyModel task_only = with_domain;
    for (int it = 0; it < 5; ++it) {
        joint_step(with_domain, batch, 0.0, 0.05);
        DomainBatch src_only = batch;
        src_only.target.clear();
        // emulate task-only training: domain branch still sees the batch but
        // its gradient cannot reach the features at lambda 0
        joint_step(task_only, batch, 0.0, 0.05);
    }
    for (size_t i = 0; i < with_domain.conv1.weights.size(); ++i)
        CHECK_THAT(with_domain.conv1.weights[i],
                   Catch::Matchers::WithinAbs(task_only.conv1.weights[i], 1e-9));
}

TEST_CASE("GRL routes -lambda times the identity-layer gradient to features") {
    ToyDomains d = make_toy_domains(2, 4);
    DomainBatch batch;
    batch.source.push_back(&d.source.images[0]);
    batch.source_labels.push_back(d.source.labels[0]);

    // two models, same init; one steps with lambda, one with an identity
    // "GRL" emulated by negating lambda (identity = -(-1) * lambda)
    const double lambda = 0.5, lr = 1.0;
    ToyModel a = toy_model_init(3);
    ToyModel b = a;
    ToyModel init = a;

    // zero the task contribution by using zero-lr on it: instead compare
    // parameter deltas between lambda and -lambda runs; the task part is
    // identical, so the domain-driven feature deltas must be opposite.
    joint_step(a, batch, lambda, lr);
    joint_step(b, batch, -lambda, lr);
    for (size_t i = 0; i < a.conv1.weights.size(); ++i) {
        double da = a.conv1.weights[i] - init.conv1.weights[i];
        double db = b.conv1.weights[i] - init.conv1.weights[i];
        // da = task + dom(lambda), db = task - dom(lambda)
        // midpoint must equal the pure-task delta; check consistency:
        double task = (da + db) / 2.0;
        double dom = (da - db) / 2.0;
        CHECK(std::isfinite(task));
        CHECK(std::isfinite(dom));
    }
    // and a lambda=0 run reproduces exactly the midpoint (pure task step)
    ToyModel c = init;
    joint_step(c, batch, 0.0, lr);
    for (size_t i = 0; i < a.conv1.weights.size(); ++i) {
        double task = (a.conv1.weights[i] + b.conv1.weights[i]) / 2.0;
        CHECK_THAT(c.conv1.weights[i], Catch::Matchers::WithinAbs(task, 1e-9));
    }
}

TEST_CASE("target-only task gradient is zero") {
    ToyDomains d = make_toy_domains(4, 4);
    DomainBatch batch;
    batch.source.push_back(&d.source.images[0]);
    batch.source_labels.push_back(d.source.labels[0]);
    for (auto& img : d.target.images) batch.target.push_back(&img);

    // task loss must be computed over source only; adding targets must not
    // change the reported task loss
    ToyModel m = toy_model_init(9);
    ToyModel m2 = m;
    DomainBatch src_only = batch;
    src_only.target.clear();
    JointStepResult with_targets = joint_step(m, batch, 0.0, 0.0);
    JointStepResult without = joint_step(m2, src_only, 0.0, 0.0);
    CHECK_THAT(with_targets.task_loss,
               Catch::Matchers::WithinAbs(without.task_loss, 1e-12));

    DomainBatch empty_source;
    empty_source.target.push_back(&d.target.images[0]);
    CHECK_THROWS(joint_step(m, empty_source, 0.1, 0.05));
}

TEST_CASE("domain classifier learns with frozen features") {
    ToyDomains d = make_toy_domains(5, 16);
    ToyModel m = toy_model_init(11);
    DomainBatch batch;
    for (size_t i = 0; i < 8; ++i) {
        batch.source.push_back(&d.source.images[i]);
        batch.source_labels.push_back(d.source.labels[i]);
        batch.target.push_back(&d.target.images[i]);
    }
    // lambda 0 freezes the feature response to the domain loss; lr affects
    // all parts, so track the domain loss itself
    double first = joint_step(m, batch, 0.0, 0.1).domain_loss;
    double last = 0.0;
    for (int it = 0; it < 200; ++it) last = joint_step(m, batch, 0.0, 0.1).domain_loss;
    CHECK(last < first);
}

TEST_CASE("toy domains are deterministic and labeled") {
    ToyDomains a = make_toy_domains(3, 6);
    ToyDomains b = make_toy_domains(3, 6);
    REQUIRE(a.source.images.size() == 6);
    REQUIRE(a.target.images.size() == 6);
    for (size_t i = 0; i < a.source.images.size(); ++i)
        CHECK(testutil::max_abs_diff(a.source.images[i], b.source.images[i]) == 0.0);
    for (size_t i = 0; i < a.target.images.size(); ++i)
        CHECK(testutil::max_abs_diff(a.target.images[i], b.target.images[i]) == 0.0);
}

TEST_CASE("dehazed target variant is closer to clean than the hazed one") {
    ToyDomains v1 = make_toy_domains(6, 12, 1);
    ToyDomains v2 = make_toy_domains(6, 12, 2);
    double psnr1 = 0.0, psnr2 = 0.0;
    for (size_t i = 0; i < v1.target.images.size(); ++i) {
        psnr1 += psnr(v1.target.images[i], v1.target_clean[i]) / v1.target.images.size();
        psnr2 += psnr(v2.target.images[i], v2.target_clean[i]) / v2.target.images.size();
    }
    CHECK(psnr2 > psnr1);
}

TEST_CASE("adaptation report is reproducible") {
    AdaptationReport a = run_adaptation_experiment(1, 0.1, 50, 1);
    AdaptationReport b = run_adaptation_experiment(1, 0.1, 50, 1);
    CHECK(a.baseline_target_acc == b.baseline_target_acc);
    CHECK(a.adapted_target_acc == b.adapted_target_acc);
    CHECK(a.domain_acc_final == b.domain_acc_final);
}
