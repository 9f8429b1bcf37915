#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "abi/sim/conjugate_gaussian.hpp"
#include "abi/sim/lotka_volterra.hpp"
#include "abi/sim/simulator.hpp"
#include "helpers.hpp"

using namespace abi;
using namespace abi::sim;

namespace {

// Two-stage location/scale toy model: mu, sigma scalars, x of length 10.
SimulatorSpec toy_simulator() {
    Stage prior;
    prior.name = "prior";
    prior.outputs = {"mu", "sigma"};
    prior.run = [](const NamedValues&, num::RngStream& rng) {
        NamedValues out;
        out.set_scalar("mu", rng.normal(0.0, 0.5));
        out.set_scalar("sigma", std::abs(rng.normal(1.0, 0.1)));
        return out;
    };
    Stage likelihood;
    likelihood.name = "likelihood";
    likelihood.inputs = {"mu", "sigma"};
    likelihood.outputs = {"x"};
    likelihood.run = [](const NamedValues& in, num::RngStream& rng) {
        const double mu = in.at("mu").item(0);
        const double sigma = in.at("sigma").item(0);
        std::vector<double> x(10);
        for (auto& v : x) v = rng.normal(mu, sigma);
        NamedValues out;
        out.set("x", num::Array::from_values({10}, std::move(x)));
        return out;
    };
    return make_simulator({prior, likelihood});
}

bool batches_equal(const NamedBatch& a, const NamedBatch& b) {
    if (a.size() != b.size() || a.batch_size() != b.batch_size()) return false;
    for (const auto& [name, arr] : a.items()) {
        const num::Array* other = b.find(name);
        if (!other || other->shape() != arr.shape()) return false;
        for (std::int64_t i = 0; i < arr.numel(); ++i)
            if (arr.item(i) != other->item(i)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("make_simulator validates the stage graph") {
    CHECK_THROWS_WITH_AS(make_simulator({}), "make_simulator: no stages", std::invalid_argument);

    Stage needs_missing;
    needs_missing.name = "consumer";
    needs_missing.inputs = {"not_there"};
    needs_missing.outputs = {"y"};
    needs_missing.run = [](const NamedValues&, num::RngStream&) { return NamedValues{}; };
    CHECK_THROWS_AS(make_simulator({needs_missing}), std::invalid_argument);

    Stage a;
    a.name = "a";
    a.outputs = {"v"};
    a.run = [](const NamedValues&, num::RngStream&) {
        NamedValues out;
        out.set_scalar("v", 1.0);
        return out;
    };
    Stage dup = a;
    dup.name = "b";
    CHECK_THROWS_AS(make_simulator({a, dup}), std::invalid_argument);

    Stage neither;
    neither.name = "c";
    neither.outputs = {"w"};
    CHECK_THROWS_AS(make_simulator({neither}), std::invalid_argument);
}

TEST_CASE("sample stacks per-draw shapes with a batch axis") {
    auto sim = toy_simulator();
    num::RngStream stream(5, 0);
    NamedBatch batch = sample(sim, 5, stream);
    CHECK(batch.batch_size() == 5);
    CHECK(batch.at("mu").shape() == num::Shape{5, 1});
    CHECK(batch.at("sigma").shape() == num::Shape{5, 1});
    CHECK(batch.at("x").shape() == num::Shape{5, 10});
}

TEST_CASE("meta variables are per-batch constants") {
    MetaStage meta;
    meta.outputs = {"N"};
    meta.run = [](num::RngStream& rng) {
        NamedValues out;
        out.set_scalar("N", static_cast<double>(rng.randint(5, 15)));
        return out;
    };
    Stage draw;
    draw.name = "draw";
    draw.inputs = {"N"};
    draw.outputs = {"x"};
    draw.run = [](const NamedValues& in, num::RngStream& rng) {
        const auto n = static_cast<std::int64_t>(in.at("N").item(0));
        std::vector<double> x(static_cast<std::size_t>(n));
        for (auto& v : x) v = rng.normal();
        NamedValues out;
        out.set("x", num::Array::from_values({n}, std::move(x)));
        return out;
    };
    auto sim = make_simulator({draw}, meta);
    num::RngStream stream(9, 0);
    NamedBatch batch = sample(sim, 8, stream);
    CHECK(batch.is_meta("N"));
    CHECK(batch.at("N").numel() == 1);
    CHECK(batch.at("x").extent(0) == 8);
    CHECK(batch.at("x").extent(1) == static_cast<std::int64_t>(batch.at("N").item(0)));
}

TEST_CASE("sampling is deterministic in the stream and advances it") {
    auto sim = toy_simulator();
    num::RngStream s1(123, 4);
    num::RngStream s2(123, 4);
    NamedBatch b1 = sample(sim, 6, s1);
    NamedBatch b2 = sample(sim, 6, s2);
    CHECK(batches_equal(b1, b2));
    NamedBatch b3 = sample(sim, 6, s1);
    CHECK_FALSE(batches_equal(b1, b3));
}

TEST_CASE("batching equals stacked independent draws under the stream policy") {
    auto sim = toy_simulator();
    num::RngStream stream(77, 1);
    num::RngStream probe = stream;  // replicate the per-row substream policy
    NamedBatch batch = sample(sim, 4, stream);
    const std::uint64_t base = probe.next_u64();
    for (std::int64_t r = 0; r < 4; ++r) {
        num::RngStream row_rng(probe.seed(), base + static_cast<std::uint64_t>(r));
        NamedValues prior_out = sim.stages()[0].run({}, row_rng);
        NamedValues like_in;
        like_in.set("mu", prior_out.at("mu"));
        like_in.set("sigma", prior_out.at("sigma"));
        NamedValues like_out = sim.stages()[1].run(like_in, row_rng);
        CHECK(batch.at("mu").item(r) == prior_out.at("mu").item(0));
        for (std::int64_t j = 0; j < 10; ++j) CHECK(batch.at("x").item(r * 10 + j) == like_out.at("x").item(j));
    }
}

TEST_CASE("parallel sampling matches sequential and speeds up slow stages") {
    auto sim = toy_simulator();
    num::RngStream s1(42, 0), s2(42, 0);
    NamedBatch seq = sample(sim, 16, s1);
    NamedBatch par = sample_parallel(sim, 16, s2, 4);
    CHECK(batches_equal(seq, par));

    num::RngStream s3(42, 0);
    CHECK_THROWS_AS(sample(sim, 0, s3), std::invalid_argument);

    Stage slow;
    slow.name = "slow";
    slow.outputs = {"v"};
    slow.run = [](const NamedValues&, num::RngStream& rng) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        NamedValues out;
        out.set_scalar("v", rng.normal());
        return out;
    };
    auto slow_sim = make_simulator({slow});
    auto timed = [&](int workers) {
        num::RngStream s(1, 0);
        auto t0 = std::chrono::steady_clock::now();
        sample_parallel(slow_sim, 24, s, workers);
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const double t_seq = timed(1);
    const double t_par = timed(4);
    CHECK(t_seq >= 2.0 * t_par);
}

TEST_CASE("worker failures carry the stage name") {
    Stage bad;
    bad.name = "exploder";
    bad.outputs = {"v"};
    bad.run = [](const NamedValues&, num::RngStream&) -> NamedValues { throw std::runtime_error("boom"); };
    auto sim = make_simulator({bad});
    num::RngStream s(3, 0);
    try {
        sample_parallel(sim, 8, s, 4);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("exploder") != std::string::npos);
    }
}

TEST_CASE("lv_rhs formula") {
    auto [d1x, d1y] = lv_rhs({1.0, 1.0}, {1, 1, 1, 1});
    CHECK(d1x == 0.0);
    CHECK(d1y == 0.0);
    auto [d2x, d2y] = lv_rhs({2.0, 3.0}, {1, 0, 1, 0});
    CHECK(d2x == 2.0);
    CHECK(d2y == -3.0);
    auto [d3x, d3y] = lv_rhs({4.0, 1.0}, {2, 1, 1, 0.5});
    CHECK(d3x == 4.0);
    CHECK(d3y == 1.0);
}

TEST_CASE("integrate_rk4 basic correctness") {
    std::vector<double> grid(11);
    for (int i = 0; i <= 10; ++i) grid[static_cast<std::size_t>(i)] = 0.1 * i;

    auto zero_rhs = [](double, std::span<const double>, std::span<double> ds) { ds[0] = 0.0; };
    auto traj = integrate_rk4(zero_rhs, std::vector<double>{3.5}, grid);
    for (double v : traj) CHECK(v == 3.5);

    std::vector<double> grid100(101);
    for (int i = 0; i <= 100; ++i) grid100[static_cast<std::size_t>(i)] = 0.01 * i;
    auto exp_rhs = [](double, std::span<const double> s, std::span<double> ds) { ds[0] = s[0]; };
    auto etraj = integrate_rk4(exp_rhs, std::vector<double>{1.0}, grid100);
    CHECK(std::abs(etraj.back() - std::exp(1.0)) < 1e-6);

    std::vector<double> bad_grid{0.0, 0.5, 0.4};
    CHECK_THROWS_AS(integrate_rk4(zero_rhs, std::vector<double>{1.0}, bad_grid), std::invalid_argument);

    auto blowup = [](double, std::span<const double> s, std::span<double> ds) { ds[0] = s[0] * s[0]; };
    std::vector<double> long_grid(51);
    for (int i = 0; i <= 50; ++i) long_grid[static_cast<std::size_t>(i)] = 0.5 * i;
    try {
        integrate_rk4(blowup, std::vector<double>{10.0}, long_grid);
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("time index") != std::string::npos);
    }
}

TEST_CASE("lv trajectories conserve the first integral") {
    const std::array<double, 4> p{1.0, 0.5, 1.0, 0.5};
    auto rhs = [&p](double, std::span<const double> s, std::span<double> ds) {
        auto [dx, dy] = lv_rhs({s[0], s[1]}, p);
        ds[0] = dx;
        ds[1] = dy;
    };
    std::vector<double> grid(100);
    for (int i = 0; i < 100; ++i) grid[static_cast<std::size_t>(i)] = 5.0 * i / 99.0;
    auto traj = integrate_rk4(rhs, std::vector<double>{1.0, 1.0}, grid);
    auto v_of = [&p](double x, double y) { return p[3] * x - p[2] * std::log(x) + p[1] * y - p[0] * std::log(y); };
    const double v0 = v_of(traj[0], traj[1]);
    for (std::size_t i = 0; i < 100; ++i) {
        const double v = v_of(traj[2 * i], traj[2 * i + 1]);
        CHECK(std::abs(v - v0) / std::abs(v0) < 1e-4);
    }
}

TEST_CASE("observation_model identity, stride, and noise behavior") {
    std::vector<double> x(100), y(100), t(100);
    for (int i = 0; i < 100; ++i) {
        x[static_cast<std::size_t>(i)] = 1.0 + 0.01 * i;
        y[static_cast<std::size_t>(i)] = 2.0 - 0.01 * i;
        t[static_cast<std::size_t>(i)] = 0.05 * i;
    }
    num::RngStream rng(10, 0);
    Observation ident = observation_model(x, y, t, 1, 1.0, 0.0, rng);
    CHECK(ident.x == x);
    CHECK(ident.y == y);
    CHECK(ident.t == t);
    for (double m : ident.mask) CHECK(m == 1.0);

    Observation strided = observation_model(x, y, t, 10, 1.0, 0.0, rng);
    CHECK(strided.x.size() == 10);
    CHECK(strided.x[0] == x[0]);
    CHECK(strided.x[9] == x[90]);
    CHECK(strided.t[3] == t[30]);

    // multiplicative log-normal noise: sd of log(observed) close to the scale
    std::vector<double> ones{1.0}, zt{0.0};
    std::vector<double> logs;
    for (int rep = 0; rep < 10000; ++rep) {
        Observation o = observation_model(ones, ones, zt, 1, 1.0, 0.1, rng);
        logs.push_back(std::log(o.x[0]));
    }
    const double sd = std::sqrt(testutil::vec_var(logs));
    CHECK(std::abs(sd - 0.1) / 0.1 < 0.05);
    CHECK(std::abs(testutil::vec_mean(logs)) < 0.005);

    Observation thinned = observation_model(x, y, t, 10, 0.5, 0.0, rng);
    CHECK(thinned.x.size() == 10);
    bool any_dropped = false;
    for (std::size_t i = 0; i < 10; ++i) {
        if (thinned.mask[i] == 0.0) {
            any_dropped = true;
            CHECK(thinned.x[i] == 0.0);
            CHECK(thinned.y[i] == 0.0);
        } else {
            CHECK(thinned.x[i] > 0.0);
        }
    }
    CHECK(any_dropped);

    CHECK_THROWS_AS(observation_model(ones, ones, zt, 1, 1e-12, 0.0, rng), std::runtime_error);
}

TEST_CASE("lv_prior support and center") {
    num::RngStream rng(2025, 0);
    double acc = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto p = lv_prior(rng);
        for (double v : p) {
            CHECK(v > 0.1);
            CHECK(v < 4.0);
        }
        acc += p[0];
    }
    // sigmoid of a symmetric variable has mean 1/2, so parameters center at 2.05
    CHECK(acc / n == doctest::Approx(2.05).epsilon(0.005));
}

TEST_CASE("expert_stats values and failure modes") {
    std::vector<double> xs(100), ys(100);
    for (int i = 0; i < 100; ++i) {
        xs[static_cast<std::size_t>(i)] = std::sin(2.0 * 3.141592653589793 * i / 25.0);
        ys[static_cast<std::size_t>(i)] = xs[static_cast<std::size_t>(i)];
    }
    auto st = expert_stats(xs, ys, {2, 5});
    CHECK(st.auto_corrs.size() == 4);
    CHECK(st.cross_corr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(st.period - 25.0) <= 100.0 / 4.0 - 100.0 / 5.0);

    std::vector<double> flat(100, 2.0);
    CHECK_THROWS_AS(expert_stats(flat, xs, {2}), std::runtime_error);
    std::vector<double> tiny{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(expert_stats(tiny, tiny, {5}), std::invalid_argument);
}

TEST_CASE("lotka volterra simulator shapes and summary shapes") {
    LotkaVolterraConfig cfg;
    cfg.with_summaries = true;
    auto sim = lotka_volterra_simulator(cfg);
    num::RngStream stream(7, 0);
    NamedBatch batch = sample(sim, 3, stream);
    CHECK(batch.at("alpha").shape() == num::Shape{3, 1});
    CHECK(batch.at("x").shape() == num::Shape{3, 100});
    CHECK(batch.at("observed_x").shape() == num::Shape{3, 10});
    CHECK(batch.at("observed_mask").shape() == num::Shape{3, 10});
    CHECK(batch.at("means").shape() == num::Shape{3, 2});
    CHECK(batch.at("log_vars").shape() == num::Shape{3, 2});
    CHECK(batch.at("auto_corrs").shape() == num::Shape{3, 4});
    CHECK(batch.at("cross_corr").shape() == num::Shape{3, 1});
    CHECK(batch.at("period").shape() == num::Shape{3, 1});
    for (const auto& [name, arr] : batch.items())
        for (std::int64_t i = 0; i < arr.numel(); ++i) CHECK(std::isfinite(arr.item(i)));
}

TEST_CASE("lotka volterra stays finite across the prior box") {
    LotkaVolterraConfig cfg;
    auto sim = lotka_volterra_simulator(cfg);
    num::RngStream stream(31337, 0);
    for (int rep = 0; rep < 10; ++rep) {
        NamedBatch batch = sample(sim, 200, stream);
        const auto& ox = batch.at("observed_x");
        for (std::int64_t i = 0; i < ox.numel(); ++i) CHECK(std::isfinite(ox.item(i)));
    }
}

TEST_CASE("conjugate gaussian oracle") {
    ConjugateGaussianConfig cfg;
    cfg.n = 1;
    auto [m1, s1] = conjugate_posterior(cfg, std::vector<double>{0.0});
    CHECK(m1 == doctest::Approx(0.0));
    CHECK(s1 == doctest::Approx(std::sqrt(0.5)));

    ConjugateGaussianConfig cfg99;
    cfg99.n = 99;
    std::vector<double> sym(99, 0.0);
    auto [m2, s2] = conjugate_posterior(cfg99, sym);
    CHECK(m2 == doctest::Approx(0.0));
    CHECK(s2 == doctest::Approx(0.1));

    CHECK(conjugate_lml(cfg, std::vector<double>{0.0}) ==
          doctest::Approx(-0.5 * std::log(4.0 * 3.141592653589793238)).epsilon(1e-12));

    ConjugateGaussianConfig bad;
    bad.prior_sd = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    auto sim = conjugate_gaussian_simulator(ConjugateGaussianConfig{});
    num::RngStream stream(55, 0);
    NamedBatch batch = sample(sim, 4, stream);
    CHECK(batch.at("mu").shape() == num::Shape{4, 1});
    CHECK(batch.at("x").shape() == num::Shape{4, 10});

    // simulated x rows scatter around mu
    for (std::int64_t r = 0; r < 4; ++r) {
        double mu = batch.at("mu").item(r);
        double mean = 0;
        for (std::int64_t j = 0; j < 10; ++j) mean += batch.at("x").item(r * 10 + j);
        mean /= 10;
        CHECK(std::abs(mean - mu) < 1.5);
    }
}
