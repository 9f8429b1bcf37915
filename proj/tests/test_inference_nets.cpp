#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "abi/nets/classifier.hpp"
#include "abi/nets/coupling_flow.hpp"
#include "abi/nets/flow_matching.hpp"
#include "abi/nets/point_heads.hpp"
#include "helpers.hpp"

using namespace abi;
using namespace abi::num;
using nets::BaseDistribution;
using nets::Classifier;
using nets::ClassifierConfig;
using nets::CouplingFlow;
using nets::CouplingFlowConfig;
using nets::FlowMatching;
using nets::FlowMatchingConfig;
using testutil::param_fd_err;
using testutil::randomize_params;

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

CouplingFlowConfig small_flow_cfg() {
    CouplingFlowConfig cfg;
    cfg.num_blocks = 4;
    cfg.subnet_widths = {16, 16};
    return cfg;
}

}  // namespace

TEST_CASE("freshly built coupling flow is the identity with zero log-determinant") {
    RngStream rng(201, 0);
    CouplingFlow<double> flow(3, 2, small_flow_cfg(), rng);
    TensorD x = rand_uniform<double>(rng, {5, 3}, -2.0, 2.0);
    TensorD cond = rand_uniform<double>(rng, {5, 2}, -1.0, 1.0);
    auto [z, ld] = flow.forward(x, cond);
    REQUIRE(z.shape() == Shape{5, 3});
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(z.at(i) == x.at(i));
    for (std::int64_t b = 0; b < 5; ++b) CHECK(ld.at(b) == 0.0);

    // identity flow, standard normal base, origin in two dimensions
    CouplingFlow<double> flow2(2, 1, small_flow_cfg(), rng);
    TensorD lp = flow2.log_prob(TensorD::zeros({1, 2}), TensorD::ones({1, 1}));
    CHECK(lp.at(0) == doctest::Approx(-kLn2Pi).epsilon(1e-12));
}

TEST_CASE("coupling forward and inverse are exact inverses across random pairs") {
    RngStream rng(202, 0);
    CouplingFlow<float> flow(4, 3, CouplingFlowConfig{}, rng);
    ParamSet<float> ps;
    flow.register_params(ps, "flow");
    randomize_params(ps, rng, 0.05);

    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        TensorF x = rand_uniform<float>(rng, {2, 4}, -2.5, 2.5);
        TensorF cond = rand_uniform<float>(rng, {2, 3}, -1.0, 1.0);
        auto [z, ld] = flow.forward(x, cond);
        TensorF back = flow.inverse(z, cond);
        TensorF fwd_again = flow.forward(flow.inverse(z, cond), cond).first;
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            worst = std::max(worst, std::abs(double(back.at(i)) - double(x.at(i))));
            worst = std::max(worst, std::abs(double(fwd_again.at(i)) - double(z.at(i))));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("coupling log-determinant matches a finite-difference Jacobian") {
    RngStream rng(203, 0);
    for (std::int64_t d : {2, 3}) {
        CouplingFlow<double> flow(d, 2, small_flow_cfg(), rng);
        ParamSet<double> ps;
        flow.register_params(ps, "flow");
        randomize_params(ps, rng, 0.3);

        TensorD x = rand_uniform<double>(rng, {1, d}, -1.5, 1.5);
        TensorD cond = rand_uniform<double>(rng, {1, 2}, -1.0, 1.0);
        const double h = 1e-6;
        Eigen::MatrixXd jac(d, d);
        for (std::int64_t j = 0; j < d; ++j) {
            TensorD xp = x.clone(), xm = x.clone();
            xp.mutable_data()[static_cast<std::size_t>(j)] += h;
            xm.mutable_data()[static_cast<std::size_t>(j)] -= h;
            TensorD zp = flow.forward(xp, cond).first;
            TensorD zm = flow.forward(xm, cond).first;
            for (std::int64_t i = 0; i < d; ++i) jac(i, j) = (zp.at(i) - zm.at(i)) / (2 * h);
        }
        const double fd_logdet = std::log(std::abs(jac.determinant()));
        const double analytic = flow.forward(x, cond).second.at(0);
        CHECK(analytic == doctest::Approx(fd_logdet).epsilon(1e-4));
    }
}

TEST_CASE("every coordinate is moved by some coupling block") {
    RngStream rng(204, 0);
    CouplingFlow<double> flow(3, 1, small_flow_cfg(), rng);
    ParamSet<double> ps;
    flow.register_params(ps, "flow");
    randomize_params(ps, rng, 0.4);

    TensorD x = rand_uniform<double>(rng, {1, 3}, -1.0, 1.0);
    TensorD cond = TensorD::ones({1, 1});
    const double h = 1e-6;
    for (std::int64_t j = 0; j < 3; ++j) {
        TensorD xp = x.clone(), xm = x.clone();
        xp.mutable_data()[static_cast<std::size_t>(j)] += h;
        xm.mutable_data()[static_cast<std::size_t>(j)] -= h;
        const double diag =
            (flow.forward(xp, cond).first.at(j) - flow.forward(xm, cond).first.at(j)) / (2 * h);
        CHECK(std::abs(diag - 1.0) > 1e-3);  // identity would give exactly 1
    }
}

TEST_CASE("one-dimensional flow density integrates to one") {
    RngStream rng(205, 0);
    CouplingFlowConfig cfg = small_flow_cfg();
    CouplingFlow<double> flow(1, 2, cfg, rng);
    ParamSet<double> ps;
    flow.register_params(ps, "flow");
    randomize_params(ps, rng, 0.15);

    const std::int64_t n = 2001;
    const double lo = -10.0, hi = 10.0;
    const double step = (hi - lo) / static_cast<double>(n - 1);
    TensorD grid = TensorD::zeros({n, 1});
    for (std::int64_t i = 0; i < n; ++i) grid.mutable_data()[static_cast<std::size_t>(i)] = lo + step * i;
    TensorD cond = TensorD::zeros({n, 2});
    for (std::int64_t i = 0; i < n; ++i) {
        cond.mutable_data()[static_cast<std::size_t>(2 * i)] = 0.7;
        cond.mutable_data()[static_cast<std::size_t>(2 * i + 1)] = -0.4;
    }
    TensorD lp = flow.log_prob(grid, cond);
    double integral = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        integral += w * std::exp(lp.at(i)) * step;
    }
    CHECK(integral > 0.99);
    CHECK(integral < 1.01);
}

TEST_CASE("student-t base matches the normal base at huge dof and samples with fat tails") {
    RngStream rng(206, 0);
    CouplingFlowConfig tcfg = small_flow_cfg();
    tcfg.base = BaseDistribution::student_t;
    tcfg.dof = 1e6;
    CouplingFlow<double> tflow(2, 1, tcfg, rng);
    RngStream rng2(206, 0);
    CouplingFlow<double> nflow(2, 1, small_flow_cfg(), rng2);

    TensorD x = rand_uniform<double>(rng, {4, 2}, -2.0, 2.0);
    TensorD cond = TensorD::ones({4, 1});
    TensorD lt = tflow.log_prob(x, cond);
    TensorD ln = nflow.log_prob(x, cond);
    for (std::int64_t b = 0; b < 4; ++b) CHECK(std::abs(lt.at(b) - ln.at(b)) < 1e-3);

    // nu = 10 draws have variance nu / (nu - 2)
    tcfg.dof = 10.0;
    CouplingFlow<double> fat(1, 0, tcfg, rng);
    TensorD draws = fat.sample_base(20000, rng);
    std::vector<double> v(draws.data().begin(), draws.data().end());
    CHECK(testutil::vec_mean(v) == doctest::Approx(0.0).epsilon(0.05));
    CHECK(testutil::vec_var(v) == doctest::Approx(10.0 / 8.0).epsilon(0.10));

    // gamma sampler feeding the t draws has the right mean
    double acc = 0.0;
    for (int i = 0; i < 20000; ++i) acc += nets::detail::gamma_draw(rng, 3.5);
    CHECK(acc / 20000.0 == doctest::Approx(3.5).epsilon(0.03));
}

TEST_CASE("coupling flow training objective gradients match finite differences") {
    RngStream rng(207, 0);
    CouplingFlowConfig cfg;
    cfg.num_blocks = 2;
    cfg.subnet_widths = {6};
    CouplingFlow<double> flow(2, 1, cfg, rng);
    ParamSet<double> ps;
    flow.register_params(ps, "flow");
    randomize_params(ps, rng, 0.3);

    TensorD x = rand_uniform<double>(rng, {3, 2}, -1.0, 1.0);
    TensorD cond = rand_uniform<double>(rng, {3, 1}, -1.0, 1.0);
    const double err = param_fd_err(ps, [&] { return neg(mean(flow.log_prob(x, cond))); });
    CHECK(err < 1e-6);
}

TEST_CASE("non-finite coupling activations are reported") {
    RngStream rng(208, 0);
    CouplingFlow<double> flow(2, 1, small_flow_cfg(), rng);
    ParamSet<double> ps;
    flow.register_params(ps, "flow");
    randomize_params(ps, rng, 0.2);
    ps.at(0).tensor.mutable_data()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(flow.forward(TensorD::ones({1, 2}), TensorD::ones({1, 1})), std::runtime_error);
}

TEST_CASE("flow matching path hits the documented endpoint") {
    TensorD theta = TensorD::from_values({2.0, -1.0});
    TensorD x0 = TensorD::from_values({0.3, 0.4});
    TensorD t = TensorD::ones({2});
    auto [x_t, v_star] = nets::fm_path<double>(reshape(theta, {1, 2}), reshape(x0, {1, 2}),
                                               reshape(t, {2, 1}), 0.0);
    // sigma_min = 0, t = 1: the path lands on theta and the velocity is theta - x0
    CHECK(x_t.at(0) == 2.0);
    CHECK(x_t.at(1) == -1.0);
    CHECK(v_star.at(0) == doctest::Approx(2.0 - 0.3));
    CHECK(v_star.at(1) == doctest::Approx(-1.0 - 0.4));
}

TEST_CASE("flow matching loss vanishes for the exact velocity") {
    RngStream rng(209, 0);
    FlowMatchingConfig cfg;
    FlowMatching<double> fm(2, 0, cfg, rng);
    TensorD theta = rand_uniform<double>(rng, {8, 2}, -2.0, 2.0);

    auto oracle = [&](const TensorD& x_t, const TensorD& t, const TensorD&) {
        TensorD shrink = one_minus(mul_scalar(t, 1.0 - cfg.sigma_min));
        TensorD x0 = div(sub(x_t, mul(t, theta)), shrink);
        return sub(theta, mul_scalar(x0, 1.0 - cfg.sigma_min));
    };
    RngStream lr(210, 0);
    TensorD loss = fm.loss_with(oracle, theta, TensorD(), lr);
    CHECK(loss.value() < 1e-18);
}

TEST_CASE("zero velocity leaves base draws untouched in sampling and density") {
    RngStream rng(211, 0);
    FlowMatching<float> fm(2, 0, FlowMatchingConfig{}, rng);  // zero-initialized head => v = 0

    RngStream s1(212, 0), s2(212, 0);
    TensorF base = randn<float>(s1, {6, 2});
    TensorF draws = fm.sample(6, TensorF(), s2);
    for (std::int64_t i = 0; i < base.numel(); ++i) CHECK(draws.at(i) == base.at(i));

    TensorF x = rand_uniform<float>(rng, {4, 2}, -2.0, 2.0);
    TensorF lp = fm.log_prob(x, TensorF());
    for (std::int64_t b = 0; b < 4; ++b) {
        const double expect =
            -0.5 * (double(x.at(2 * b)) * x.at(2 * b) + double(x.at(2 * b + 1)) * x.at(2 * b + 1)) - kLn2Pi;
        CHECK(lp.at(b) == doctest::Approx(expect).epsilon(1e-5));
    }

    FlowMatchingConfig deep;
    deep.exact_trace_max_dim = 3;
    RngStream rng3(213, 0);
    FlowMatching<float> wide(4, 0, deep, rng3);
    CHECK_THROWS_AS(wide.log_prob(TensorF::zeros({1, 4}), TensorF()), std::invalid_argument);
}

TEST_CASE("flow matching loss gradients match finite differences") {
    RngStream rng(214, 0);
    FlowMatchingConfig cfg;
    cfg.vnet_widths = {8};
    cfg.time_freqs = 2;
    FlowMatching<double> fm(1, 2, cfg, rng);
    ParamSet<double> ps;
    fm.register_params(ps, "fm");
    randomize_params(ps, rng, 0.3);

    TensorD theta = rand_uniform<double>(rng, {4, 1}, -1.0, 1.0);
    TensorD cond = rand_uniform<double>(rng, {4, 2}, -1.0, 1.0);
    const double err = param_fd_err(ps, [&] {
        RngStream fixed(215, 0);
        return fm.loss(theta, cond, fixed);
    });
    CHECK(err < 1e-6);
}

TEST_CASE("flow matching learns a shifted gaussian end to end") {
    RngStream rng(216, 0);
    FlowMatchingConfig cfg;
    cfg.vnet_widths = {48, 48};
    FlowMatching<float> fm(1, 0, cfg, rng);
    ParamSet<float> ps;
    fm.register_params(ps, "fm");
    AdamWConfig<float> ocfg;
    ocfg.lr = 2e-3f;
    AdamW<float> opt(ps, ocfg);

    const int steps = 700;
    std::vector<double> history;
    RngStream data(217, 0), noise(218, 0);
    for (int step = 0; step < steps; ++step) {
        TensorF theta = TensorF::zeros({128, 1});
        auto d = theta.mutable_data();
        for (auto& v : d) v = static_cast<float>(data.normal(3.0, 0.5));
        ps.zero_grad();
        TensorF loss = fm.loss(theta, TensorF(), noise);
        backward(loss);
        opt.step(ps, cosine_lr(2e-3f, 1e-5f, step, steps));
        history.push_back(loss.value());
    }
    const double early = std::accumulate(history.begin(), history.begin() + 100, 0.0) / 100.0;
    const double late = std::accumulate(history.end() - 100, history.end(), 0.0) / 100.0;
    CHECK(late < early);

    RngStream srng(219, 0);
    TensorF draws = fm.sample(10000, TensorF(), srng);
    std::vector<double> v(draws.data().begin(), draws.data().end());
    const double m = testutil::vec_mean(v);
    const double sd = std::sqrt(testutil::vec_var(v));
    CHECK(std::abs(m - 3.0) < 0.05);
    CHECK(std::abs(sd - 0.5) < 0.1);

    // multi-step contract: one Euler step lands elsewhere
    RngStream a(220, 0), b(220, 0);
    TensorF one_step = fm.sample(3, TensorF(), a, 1);
    TensorF many_steps = fm.sample(3, TensorF(), b, 100);
    double diff = 0;
    for (std::int64_t i = 0; i < 3; ++i)
        diff = std::max(diff, std::abs(double(one_step.at(i)) - double(many_steps.at(i))));
    CHECK(diff > 1e-3);

    // density integrates to one on a wide grid
    const std::int64_t n = 401;
    const double lo = 0.0, hi = 6.0, step = (hi - lo) / (n - 1);
    TensorF grid = TensorF::zeros({n, 1});
    for (std::int64_t i = 0; i < n; ++i) grid.mutable_data()[static_cast<std::size_t>(i)] = float(lo + step * i);
    TensorF lp = fm.log_prob(grid, TensorF());
    double integral = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        integral += w * std::exp(double(lp.at(i))) * step;
    }
    CHECK(integral > 0.98);
    CHECK(integral < 1.02);

    // density agrees with a histogram of the model's own samples
    const int bins = 30;
    const double blo = 1.5, bhi = 4.5, bw = (bhi - blo) / bins;
    std::vector<double> hist(bins, 0.0);
    std::size_t kept = 0;
    for (double x : v) {
        const int k = static_cast<int>((x - blo) / bw);
        if (x >= blo && x < bhi) {
            hist[static_cast<std::size_t>(k)] += 1.0;
            ++kept;
        }
    }
    TensorF centers = TensorF::zeros({bins, 1});
    for (int k = 0; k < bins; ++k)
        centers.mutable_data()[static_cast<std::size_t>(k)] = float(blo + (k + 0.5) * bw);
    TensorF clp = fm.log_prob(centers, TensorF());
    double tv = 0.0;
    for (int k = 0; k < bins; ++k) {
        const double p_hist = hist[static_cast<std::size_t>(k)] / static_cast<double>(v.size());
        const double p_model = std::exp(double(clp.at(k))) * bw;
        tv += 0.5 * std::abs(p_hist - p_model);
    }
    CHECK(tv < 0.05);
    CHECK(kept > 9000);
}

TEST_CASE("scoring rules reproduce their textbook values") {
    using nets::mean_score;
    using nets::quantile_score;

    TensorD est = TensorD::full({1, 1}, 1.0);
    TensorD target = TensorD::full({1, 1}, 3.0);
    CHECK(mean_score<double>(est, target).value() == doctest::Approx(4.0));

    TensorD q = TensorD::full({1, 1, 1}, 2.0);
    CHECK(quantile_score<double>(q, target, {0.5}).value() == doctest::Approx(0.5));

    TensorD q9 = TensorD::full({1, 1, 1}, 3.0);
    TensorD t2 = TensorD::full({1, 1}, 2.0);
    CHECK(quantile_score<double>(q9, t2, {0.9}).value() == doctest::Approx(0.1));

    CHECK_THROWS_AS(quantile_score<double>(q, target, {1.5}), std::invalid_argument);
    CHECK_THROWS_AS(quantile_score<double>(q, target, {0.0}), std::invalid_argument);
}

TEST_CASE("quantile score is minimized at the empirical quantile") {
    RngStream rng(221, 0);
    const std::int64_t n = 201;
    std::vector<double> sample;
    for (std::int64_t i = 0; i < n; ++i) sample.push_back(rng.exponential(0.7));
    TensorD target = TensorD::zeros({n, 1});
    for (std::int64_t i = 0; i < n; ++i) target.mutable_data()[static_cast<std::size_t>(i)] = sample[static_cast<std::size_t>(i)];

    const double tau = 0.3;
    double best_c = 0.0, best = std::numeric_limits<double>::infinity();
    for (double c = 0.0; c <= 6.0; c += 0.01) {
        TensorD est = TensorD::full({n, 1, 1}, c);
        const double s = nets::quantile_score<double>(est, target, {tau}).value();
        if (s < best) {
            best = s;
            best_c = c;
        }
    }
    std::vector<double> sorted = sample;
    std::sort(sorted.begin(), sorted.end());
    const double emp = sorted[static_cast<std::size_t>(tau * n)];
    CHECK(std::abs(best_c - emp) < 0.05);
}

TEST_CASE("point heads emit mean and quantile stacks of the right shapes") {
    RngStream rng(222, 0);
    nets::PointHeads<float> heads(3, 5, nets::PointHeadsConfig{}, rng);
    TensorF cond = rand_uniform<float>(rng, {7, 5}, -1.0, 1.0);
    auto out = heads.forward(cond);
    CHECK(out.mean.shape() == Shape{7, 3});
    CHECK(out.quantiles.shape() == Shape{7, 5, 3});

    TensorF theta = rand_uniform<float>(rng, {7, 3}, -1.0, 1.0);
    TensorF loss = heads.loss(cond, theta);
    CHECK(loss.numel() == 1);
    CHECK(std::isfinite(double(loss.value())));

    nets::PointHeadsConfig bad;
    bad.quantile_levels = {0.5, 1.2};
    CHECK_THROWS_AS(nets::PointHeads<float>(3, 5, bad, rng), std::invalid_argument);
}

TEST_CASE("point head gradients match finite differences") {
    RngStream rng(223, 0);
    nets::PointHeadsConfig cfg;
    cfg.trunk_widths = {6};
    cfg.quantile_levels = {0.25, 0.75};
    nets::PointHeads<double> heads(2, 3, cfg, rng);
    ParamSet<double> ps;
    heads.register_params(ps, "heads");
    randomize_params(ps, rng, 0.3);

    // pinball kinks sit at u = 0; keep the evaluation away from them
    TensorD cond = rand_uniform<double>(rng, {4, 3}, -1.0, 1.0);
    TensorD theta = rand_uniform<double>(rng, {4, 2}, 5.0, 9.0);
    const double err = param_fd_err(ps, [&] { return heads.loss(cond, theta); });
    CHECK(err < 1e-5);
}

TEST_CASE("classifier losses and probabilities follow the softmax identities") {
    RngStream rng(224, 0);
    Classifier<double> clf(4, ClassifierConfig{}, rng);  // zero head => uniform
    TensorD x = rand_uniform<double>(rng, {6, 4}, -1.0, 1.0);
    TensorD lg = clf.logits(x);
    CHECK(nets::cross_entropy<double>(lg, std::vector<std::int64_t>(6, 1)).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    TensorD three = TensorD::zeros({1, 3});
    TensorD probs = nets::posterior_model_probs(three);
    for (std::int64_t j = 0; j < 3; ++j) CHECK(probs.at(j) == doctest::Approx(1.0 / 3.0));

    TensorD margin = TensorD::from_values({30.0, 0.0, -5.0});
    CHECK(nets::cross_entropy<double>(reshape(margin, {1, 3}), {0}).value() < 1e-10);

    TensorF rlogits = rand_uniform<float>(rng, {8, 5}, -3.0, 3.0);
    TensorF p = nets::posterior_model_probs(rlogits);
    for (std::int64_t b = 0; b < 8; ++b) {
        double row = 0;
        for (std::int64_t j = 0; j < 5; ++j) row += p.at(b * 5 + j);
        CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }

    CHECK_THROWS_AS(nets::cross_entropy<double>(lg, {9, 0, 0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("ratio pairs reject tiny batches and repeated parameters floor at ln 2") {
    RngStream rng(225, 0);
    Classifier<double> clf(2, ClassifierConfig{}, rng);
    TensorD theta = TensorD::ones({1, 1});
    TensorD cond = TensorD::ones({1, 1});
    CHECK_THROWS_AS(nets::binary_ratio_loss(clf, theta, cond, rng), std::invalid_argument);

    // identical rows make positives and negatives indistinguishable
    TensorD rep = TensorD::full({8, 1}, 0.77);
    TensorD c8 = rand_uniform<double>(rng, {8, 1}, -1.0, 1.0);
    CHECK(nets::binary_ratio_loss(clf, rep, c8, rng).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    ParamSet<double> ps;
    clf.register_params(ps, "clf");
    randomize_params(ps, rng, 0.4);
    CHECK(nets::binary_ratio_loss(clf, rep, c8, rng).value() >= std::log(2.0) - 1e-9);
}

TEST_CASE("independent parameters and data train to a flat log-ratio") {
    RngStream rng(226, 0);
    Classifier<float> clf(2, ClassifierConfig{{32, 32}, 2}, rng);
    ParamSet<float> ps;
    clf.register_params(ps, "clf");
    AdamWConfig<float> ocfg;
    ocfg.lr = 1e-3f;
    AdamW<float> opt(ps, ocfg);

    RngStream data(227, 0), pairs(228, 0);
    for (int step = 0; step < 300; ++step) {
        TensorF theta = randn<float>(data, {64, 1});
        TensorF cond = randn<float>(data, {64, 1});
        ps.zero_grad();
        backward(nets::binary_ratio_loss(clf, theta, cond, pairs));
        opt.step(ps);
    }
    TensorF theta = randn<float>(data, {512, 1});
    TensorF cond = randn<float>(data, {512, 1});
    TensorF lr = nets::log_ratio(clf, theta, cond);
    double mean_abs = 0;
    for (std::int64_t i = 0; i < 512; ++i) mean_abs += lr.at(i);
    mean_abs = std::abs(mean_abs / 512.0);
    CHECK(mean_abs < 0.1);
}

TEST_CASE("trained ratio recovers the conjugate posterior on a grid") {
    RngStream rng(229, 0);
    Classifier<float> clf(2, ClassifierConfig{{64, 64}, 2}, rng);
    ParamSet<float> ps;
    clf.register_params(ps, "clf");
    AdamWConfig<float> ocfg;
    ocfg.lr = 1e-3f;
    AdamW<float> opt(ps, ocfg);

    // theta ~ N(0,1), x | theta ~ N(theta, 1)
    RngStream data(230, 0), pairs(231, 0);
    const int steps = 1200;
    for (int step = 0; step < steps; ++step) {
        TensorF theta = randn<float>(data, {256, 1});
        TensorF x = TensorF::zeros({256, 1});
        auto xd = x.mutable_data();
        for (std::int64_t i = 0; i < 256; ++i) xd[static_cast<std::size_t>(i)] = float(theta.at(i) + data.normal());
        ps.zero_grad();
        backward(nets::binary_ratio_loss(clf, theta, x, pairs));
        opt.step(ps, cosine_lr(1e-3f, 1e-5f, step, steps));
    }

    // posterior for x = 1 is N(0.5, 1/2)
    const std::int64_t n = 141;
    const double lo = -3.0, hi = 4.0, step = (hi - lo) / (n - 1);
    TensorF grid = TensorF::zeros({n, 1});
    for (std::int64_t i = 0; i < n; ++i) grid.mutable_data()[static_cast<std::size_t>(i)] = float(lo + step * i);
    TensorF xcond = TensorF::full({n, 1}, 1.0f);
    TensorF lr = nets::log_ratio(clf, grid, xcond);

    std::vector<double> w(static_cast<std::size_t>(n)), exact(static_cast<std::size_t>(n));
    double wsum = 0, esum = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double th = lo + step * i;
        w[static_cast<std::size_t>(i)] = std::exp(double(lr.at(i))) * std::exp(-0.5 * th * th);
        exact[static_cast<std::size_t>(i)] = std::exp(-(th - 0.5) * (th - 0.5));
        wsum += w[static_cast<std::size_t>(i)];
        esum += exact[static_cast<std::size_t>(i)];
    }
    double tv = 0;
    for (std::size_t i = 0; i < w.size(); ++i) tv += 0.5 * std::abs(w[i] / wsum - exact[i] / esum);
    CHECK(tv < 0.1);
}
