#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "abi/adapt/pipeline.hpp"
#include "abi/num/rng.hpp"

using namespace abi;
using adapt::Direction;
using adapt::MissingPolicy;
using adapt::TransformPipeline;
using num::Array;
using num::DType;
using sim::NamedBatch;
using sim::Semantics;

namespace {

NamedBatch gaussian_batch(std::int64_t batch, std::int64_t n_obs, std::uint64_t seed) {
    num::RngStream rng(seed, 0);
    NamedBatch b(batch);
    std::vector<double> mu(static_cast<std::size_t>(batch)), sigma(mu.size()),
        x(static_cast<std::size_t>(batch * n_obs));
    for (auto& v : mu) v = rng.normal(0.0, 1.0);
    for (auto& v : sigma) v = 0.1 + rng.uniform() * 2.0;
    for (auto& v : x) v = rng.normal(0.0, 1.0);
    b.set("mu", Array::from_values({batch, 1}, mu));
    b.set("sigma", Array::from_values({batch, 1}, sigma));
    b.set("x", Array::from_values({batch, n_obs}, x));
    b.set("N", Array::scalar(static_cast<double>(n_obs)), /*meta=*/true);
    return b;
}

TransformPipeline gaussian_pipeline() {
    TransformPipeline p;
    p.constrain_lower({"sigma"}, 0.0)
        .concatenate({"mu", "sigma"}, "inference_variables")
        .rename("x", "summary_variables")
        .as_set({"summary_variables"})
        .broadcast("N", "summary_variables")
        .sqrt({"N"})
        .rename("N", "inference_conditions")
        .convert_dtype(DType::f64, DType::f32);
    return p;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("forward pass produces the three training roles with expected shapes") {
    NamedBatch raw = gaussian_batch(5, 10, 11);
    TransformPipeline p = gaussian_pipeline();
    NamedBatch out = p.apply(raw, Direction::forward);

    REQUIRE(out.contains(adapt::role_inference_variables));
    REQUIRE(out.contains(adapt::role_summary_variables));
    REQUIRE(out.contains(adapt::role_inference_conditions));

    const Array& theta = out.at("inference_variables");
    CHECK(theta.shape() == num::Shape{5, 2});
    CHECK(theta.dtype() == DType::f32);

    const Array& summary = out.at("summary_variables");
    CHECK(summary.shape() == num::Shape{5, 10, 1});
    CHECK(out.semantics_of("summary_variables") == Semantics::set);

    const Array& cond = out.at("inference_conditions");
    CHECK(cond.shape() == num::Shape{5, 1});
    CHECK_FALSE(out.is_meta("inference_conditions"));
    for (std::int64_t r = 0; r < 5; ++r) CHECK(cond.item(r) == doctest::Approx(std::sqrt(10.0)).epsilon(1e-6));

    // column 0 is mu untouched, column 1 is unconstrained sigma
    for (std::int64_t r = 0; r < 5; ++r) {
        CHECK(rel_diff(theta.item(2 * r), raw.at("mu").item(r)) < 1e-6);
        const double s = raw.at("sigma").item(r);
        const double z = s + std::log1p(-std::exp(-s));
        CHECK(theta.item(2 * r + 1) == doctest::Approx(z).epsilon(1e-5));
    }
}

TEST_CASE("inverse of forward restores the original parameters") {
    NamedBatch raw = gaussian_batch(32, 10, 12);
    TransformPipeline p = gaussian_pipeline();
    NamedBatch fwd = p.apply(raw, Direction::forward);
    NamedBatch back = p.apply(fwd, Direction::inverse);

    REQUIRE(back.contains("mu"));
    REQUIRE(back.contains("sigma"));
    REQUIRE(back.contains("x"));
    CHECK(back.at("mu").shape() == num::Shape{32, 1});
    CHECK(back.at("sigma").shape() == num::Shape{32, 1});
    CHECK(back.at("x").shape() == num::Shape{32, 10});
    // forward casts to f32, and the non-invertible cast is passed over coming back
    CHECK(back.at("mu").dtype() == DType::f32);

    for (std::int64_t r = 0; r < 32; ++r) {
        CHECK(rel_diff(back.at("mu").item(r), raw.at("mu").item(r)) < 1e-5);
        CHECK(rel_diff(back.at("sigma").item(r), raw.at("sigma").item(r)) < 1e-5);
    }
    for (std::int64_t i = 0; i < 320; ++i) CHECK(rel_diff(back.at("x").item(i), raw.at("x").item(i)) < 1e-5);
}

TEST_CASE("inverse on a partial batch maps sampled parameters back") {
    // sampling time: only the network output exists; every other operand is passed over
    TransformPipeline p = gaussian_pipeline();
    NamedBatch raw = gaussian_batch(4, 10, 13);
    p.apply(raw, Direction::forward);  // records the concatenate split table

    NamedBatch draws(3);
    draws.set("inference_variables", Array::from_values({3, 2}, {0.5, 0.0, -1.0, 1.0, 0.2, -2.0}));
    NamedBatch back = p.apply(draws, Direction::inverse, MissingPolicy::skip);

    REQUIRE(back.contains("mu"));
    REQUIRE(back.contains("sigma"));
    CHECK_FALSE(back.contains("x"));
    const double ln2 = std::log(2.0);
    CHECK(back.at("mu").item(0) == doctest::Approx(0.5));
    CHECK(back.at("sigma").item(0) == doctest::Approx(ln2));  // softplus(0)
    CHECK(back.at("sigma").item(1) == doctest::Approx(std::log1p(std::exp(1.0))));
    CHECK(back.at("sigma").item(2) == doctest::Approx(std::log1p(std::exp(-2.0))));
}

TEST_CASE("lower-bound map sends lower + ln 2 to zero and round trips") {
    for (double lower : {0.0, -3.0, 2.5}) {
        NamedBatch b(1);
        b.set("v", Array::from_values({1, 1}, {lower + std::log(2.0)}));
        TransformPipeline p;
        p.constrain_lower({"v"}, lower);
        CHECK(std::abs(p.apply(b, Direction::forward).at("v").item(0)) < 1e-12);

        NamedBatch c(1);
        c.set("v", Array::from_values({1, 1}, {3.7}));
        NamedBatch rt = p.apply(p.apply(c, Direction::forward), Direction::inverse);
        CHECK(rt.at("v").item(0) == doctest::Approx(3.7).epsilon(1e-6));
    }

    NamedBatch bad(1);
    bad.set("v", Array::from_values({1, 1}, {-0.5}));
    TransformPipeline p;
    p.constrain_lower({"v"}, 0.0);
    CHECK_THROWS_WITH_AS(p.apply(bad, Direction::forward),
                         "transform 0 (constrain_lower): value <= lower bound", std::invalid_argument);
}

TEST_CASE("broadcast expands meta entries against a reference") {
    NamedBatch b(5);
    std::vector<double> x(50, 1.0);
    b.set("x", Array::from_values({5, 10}, x));
    b.set("N", Array::scalar(10.0), true);
    b.set("grid", Array::from_values({3}, {0.0, 0.5, 1.0}), true);

    TransformPipeline p;
    p.broadcast("N", "x").broadcast("grid", "x");
    NamedBatch out = p.apply(b, Direction::forward);

    CHECK(out.at("N").shape() == num::Shape{5, 1});
    CHECK_FALSE(out.is_meta("N"));
    for (std::int64_t r = 0; r < 5; ++r) CHECK(out.at("N").item(r) == 10.0);

    CHECK(out.at("grid").shape() == num::Shape{5, 3});
    CHECK(out.at("grid").item(4) == 0.5);

    // an entry that already carries the batch axis is left alone
    NamedBatch c(5);
    c.set("x", Array::from_values({5, 10}, x));
    c.set("N", Array::full(DType::f64, {5, 1}, 10.0));
    TransformPipeline q;
    q.broadcast("N", "x");
    NamedBatch out2 = q.apply(c, Direction::forward);
    CHECK(out2.at("N").raw_data() == c.at("N").raw_data());

    TransformPipeline r;
    r.broadcast("N", "missing_ref");
    CHECK_THROWS_WITH_AS(r.apply(b, Direction::forward), "transform 0 (broadcast): missing entry 'missing_ref'",
                         std::invalid_argument);
}

TEST_CASE("concatenation joins final axes and the inverse splits them back") {
    NamedBatch b(2);
    b.set("a", Array::from_values({2, 2}, {1, 2, 3, 4}));
    b.set("c", Array::from_values({2, 1}, {5, 6}));
    b.set("d", Array::from_values({2, 3}, {7, 8, 9, 10, 11, 12}));

    TransformPipeline p;
    p.concatenate({"a", "c", "d"}, "joined");
    NamedBatch out = p.apply(b, Direction::forward);
    REQUIRE(out.at("joined").shape() == num::Shape{2, 6});
    CHECK_FALSE(out.contains("a"));
    const std::vector<double> expect{1, 2, 5, 7, 8, 9, 3, 4, 6, 10, 11, 12};
    for (std::int64_t i = 0; i < 12; ++i) CHECK(out.at("joined").item(i) == expect[static_cast<std::size_t>(i)]);

    NamedBatch back = p.apply(out, Direction::inverse);
    CHECK(back.at("a").shape() == num::Shape{2, 2});
    CHECK(back.at("c").shape() == num::Shape{2, 1});
    CHECK(back.at("d").shape() == num::Shape{2, 3});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(back.at("a").item(i) == b.at("a").item(i));
    for (std::int64_t i = 0; i < 2; ++i) CHECK(back.at("c").item(i) == b.at("c").item(i));
    for (std::int64_t i = 0; i < 6; ++i) CHECK(back.at("d").item(i) == b.at("d").item(i));

    // widths are pinned after the first pass
    NamedBatch wrong(2);
    wrong.set("a", Array::from_values({2, 3}, {1, 2, 3, 4, 5, 6}));
    wrong.set("c", Array::from_values({2, 1}, {5, 6}));
    wrong.set("d", Array::from_values({2, 2}, {7, 8, 9, 10}));
    CHECK_THROWS_WITH_AS(p.apply(wrong, Direction::forward),
                         "transform 0 (concatenate): extents differ from recorded split table", std::invalid_argument);
}

TEST_CASE("single-source concatenation renames with a copy") {
    NamedBatch b(2);
    b.set("a", Array::from_values({2, 2}, {1, 2, 3, 4}));
    b.set_semantics("a", Semantics::set);
    TransformPipeline p;
    p.concatenate({"a"}, "renamed");
    NamedBatch out = p.apply(b, Direction::forward);
    CHECK_FALSE(out.contains("a"));
    CHECK(out.at("renamed").shape() == num::Shape{2, 2});
    CHECK(out.semantics_of("renamed") == Semantics::set);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(out.at("renamed").item(i) == b.at("a").item(i));
}

TEST_CASE("concatenation semantics carry over only on agreement") {
    NamedBatch b(2);
    b.set("a", Array::from_values({2, 1}, {1, 2}));
    b.set("c", Array::from_values({2, 1}, {3, 4}));
    b.set_semantics("a", Semantics::time_series);
    b.set_semantics("c", Semantics::time_series);
    TransformPipeline p;
    p.concatenate({"a", "c"}, "j");
    CHECK(p.apply(b, Direction::forward).semantics_of("j") == Semantics::time_series);

    NamedBatch c(2);
    c.set("a", Array::from_values({2, 1}, {1, 2}));
    c.set("c", Array::from_values({2, 1}, {3, 4}));
    c.set_semantics("a", Semantics::set);
    TransformPipeline q;
    q.concatenate({"a", "c"}, "j");
    CHECK(q.apply(c, Direction::forward).semantics_of("j") == Semantics::none);
}

TEST_CASE("standardization is exact and inverts") {
    NamedBatch b(3);
    b.set("v", Array::from_values({3, 2}, {1, 10, 2, 20, 3, 30}));
    TransformPipeline p;
    p.standardize("v", {2.0, 20.0}, {0.5, 5.0});
    NamedBatch out = p.apply(b, Direction::forward);
    const std::vector<double> expect{-2, -2, 0, 0, 2, 2};
    for (std::int64_t i = 0; i < 6; ++i) CHECK(out.at("v").item(i) == doctest::Approx(expect[static_cast<std::size_t>(i)]));
    NamedBatch back = p.apply(out, Direction::inverse);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(back.at("v").item(i) == doctest::Approx(b.at("v").item(i)));

    // scalar stats broadcast across the feature axis
    TransformPipeline q;
    q.standardize("v", {2.0}, {2.0});
    NamedBatch out2 = q.apply(b, Direction::forward);
    CHECK(out2.at("v").item(1) == doctest::Approx(4.0));

    CHECK_THROWS_AS(TransformPipeline().standardize("v", {0.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("value transforms do not commute across standardization") {
    NamedBatch b(2);
    b.set("v", Array::from_values({2, 1}, {4.0, 9.0}));

    TransformPipeline sqrt_first;
    sqrt_first.sqrt({"v"}).standardize("v", {1.0}, {2.0});
    TransformPipeline std_first;
    std_first.standardize("v", {1.0}, {2.0}).sqrt({"v"});

    const double a = sqrt_first.apply(b, Direction::forward).at("v").item(0);  // (2-1)/2
    const double c = std_first.apply(b, Direction::forward).at("v").item(0);   // sqrt(3/2)
    CHECK(a == doctest::Approx(0.5));
    CHECK(c == doctest::Approx(std::sqrt(1.5)));
    CHECK(std::abs(a - c) > 0.5);
}

TEST_CASE("an empty pipeline is the identity") {
    NamedBatch raw = gaussian_batch(4, 6, 14);
    TransformPipeline p;
    NamedBatch out = p.apply(raw, Direction::forward);
    CHECK(out.names() == raw.names());
    for (const auto& [name, a] : raw.items()) {
        CHECK(out.at(name).shape() == a.shape());
        CHECK(out.at(name).raw_data() == a.raw_data());
    }
    CHECK(out.is_meta("N"));
}

TEST_CASE("set and time-series tagging appends a trailing axis once") {
    NamedBatch b(3);
    b.set("x", Array::from_values({3, 4}, std::vector<double>(12, 1.0)));
    TransformPipeline p;
    p.as_time_series({"x"});
    NamedBatch out = p.apply(b, Direction::forward);
    CHECK(out.at("x").shape() == num::Shape{3, 4, 1});
    CHECK(out.semantics_of("x") == Semantics::time_series);

    TransformPipeline twice;
    twice.as_time_series({"x"}).as_set({"x"});
    CHECK_THROWS_WITH_AS(twice.apply(b, Direction::forward), "transform 1 (as_set): 'x' already tagged",
                         std::invalid_argument);

    NamedBatch back = p.apply(out, Direction::inverse);
    CHECK(back.at("x").shape() == num::Shape{3, 4});
    CHECK(back.semantics_of("x") == Semantics::none);
}

TEST_CASE("missing operands name the transform and are skippable") {
    NamedBatch b(2);
    b.set("a", Array::from_values({2, 1}, {1, 2}));
    TransformPipeline p;
    p.log({"a"}).rename("a", "b").drop({"ghost"});
    CHECK_THROWS_WITH_AS(p.apply(b, Direction::forward), "transform 2 (drop): missing entry 'ghost'",
                         std::invalid_argument);
    NamedBatch out = p.apply(b, Direction::forward, MissingPolicy::skip);
    CHECK(out.contains("b"));

    TransformPipeline q;
    q.keep({"a", "ghost"});
    CHECK_THROWS_WITH_AS(q.apply(b, Direction::forward), "transform 0 (keep): missing entry 'ghost'",
                         std::invalid_argument);
}

TEST_CASE("keep retains only the listed entries") {
    NamedBatch raw = gaussian_batch(3, 5, 15);
    TransformPipeline p;
    p.keep({"mu", "x"});
    NamedBatch out = p.apply(raw, Direction::forward);
    CHECK(out.names() == std::vector<std::string>{"mu", "x"});
}

TEST_CASE("dtype conversion touches matching entries and stays put on inverse") {
    NamedBatch b(2);
    b.set("a", Array::from_values({2, 1}, {1.25, 2.5}));
    b.set("c", Array::from_values_f32({2, 1}, {3.f, 4.f}));
    b.set("N", Array::scalar(7.0), true);
    TransformPipeline p;
    p.convert_dtype(DType::f64, DType::f32);
    NamedBatch out = p.apply(b, Direction::forward);
    CHECK(out.at("a").dtype() == DType::f32);
    CHECK(out.at("c").dtype() == DType::f32);
    CHECK(out.at("N").dtype() == DType::f32);
    CHECK(out.at("a").item(0) == 1.25);
    CHECK(out.is_meta("N"));

    NamedBatch back = p.apply(out, Direction::inverse);
    CHECK(back.at("a").dtype() == DType::f32);
}

TEST_CASE("elementwise math keeps the entry dtype") {
    NamedBatch b(2);
    b.set("a", Array::from_values_f32({2, 1}, {4.f, 16.f}));
    TransformPipeline p;
    p.sqrt({"a"});
    NamedBatch out = p.apply(b, Direction::forward);
    CHECK(out.at("a").dtype() == DType::f32);
    CHECK(out.at("a").item(0) == 2.0);
    CHECK(out.at("a").item(1) == 4.0);
}

TEST_CASE("positivity violations are rejected with the transform named") {
    NamedBatch b(1);
    b.set("a", Array::from_values({1, 1}, {0.0}));
    TransformPipeline p;
    p.log({"a"});
    CHECK_THROWS_WITH_AS(p.apply(b, Direction::forward), "transform 0 (log): non-positive value",
                         std::invalid_argument);
    TransformPipeline q;
    q.sqrt({"a"});
    CHECK_THROWS_AS(q.apply(b, Direction::forward), std::invalid_argument);
}

TEST_CASE("log-determinant accumulates per row and merges through concatenation") {
    NamedBatch b(2);
    b.set("mu", Array::from_values({2, 1}, {2.0, 3.0}));
    b.set("sigma", Array::from_values({2, 1}, {1.5, 0.25}));

    TransformPipeline p;
    p.log({"mu"}).constrain_lower({"sigma"}, 0.0).concatenate({"mu", "sigma"}, "inference_variables");
    adapt::AdaptResult res = p.apply_forward_logdet(b);

    REQUIRE(res.log_det.count("inference_variables") == 1);
    const auto& ld = res.log_det.at("inference_variables");
    REQUIRE(ld.size() == 2);

    auto softplus = [](double v) { return std::log1p(std::exp(v)); };
    auto softplus_inv = [](double u) { return u + std::log1p(-std::exp(-u)); };
    for (std::size_t r = 0; r < 2; ++r) {
        const double mu = b.at("mu").item(static_cast<std::int64_t>(r));
        const double sg = b.at("sigma").item(static_cast<std::int64_t>(r));
        const double expect = -std::log(mu) + softplus(-softplus_inv(sg));
        CHECK(ld[r] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("log-determinant matches a finite-difference Jacobian") {
    // chain: sqrt(mu), standardize, constrain sigma, concatenate; the Jacobian
    // is diagonal so ln|det| is the sum of per-coordinate derivative logs
    const double mu0 = 2.7, sg0 = 1.3;
    TransformPipeline p;
    p.sqrt({"mu"}).standardize("mu", {0.5}, {0.8}).constrain_lower({"sigma"}, 1.0).concatenate(
        {"mu", "sigma"}, "inference_variables");

    auto forward = [&](double mu, double sg, int coord) {
        NamedBatch b(1);
        b.set("mu", Array::from_values({1, 1}, {mu}));
        b.set("sigma", Array::from_values({1, 1}, {sg}));
        return p.apply(b, Direction::forward).at("inference_variables").item(coord);
    };

    const double h = 1e-6;
    const double dz0_dmu = (forward(mu0 + h, sg0, 0) - forward(mu0 - h, sg0, 0)) / (2 * h);
    const double dz1_dsg = (forward(mu0, sg0 + h, 1) - forward(mu0, sg0 + h - 2 * h, 1)) / (2 * h);
    const double fd_logdet = std::log(std::abs(dz0_dmu)) + std::log(std::abs(dz1_dsg));

    NamedBatch b(1);
    b.set("mu", Array::from_values({1, 1}, {mu0}));
    b.set("sigma", Array::from_values({1, 1}, {sg0}));
    adapt::AdaptResult res = p.apply_forward_logdet(b);
    CHECK(res.log_det.at("inference_variables")[0] == doctest::Approx(fd_logdet).epsilon(1e-6));
}

TEST_CASE("log-determinant per-kind values are analytic") {
    auto single = [](TransformPipeline& p, double x) {
        NamedBatch b(1);
        b.set("v", Array::from_values({1, 1}, {x}));
        return p.apply_forward_logdet(b).log_det.at("v")[0];
    };
    TransformPipeline ps;
    ps.sqrt({"v"});
    CHECK(single(ps, 4.0) == doctest::Approx(-std::log(4.0)));
    TransformPipeline pl;
    pl.log({"v"});
    CHECK(single(pl, 2.0) == doctest::Approx(-std::log(2.0)));
    TransformPipeline pz;
    pz.standardize("v", {0.0}, {2.0});
    CHECK(single(pz, 5.0) == doctest::Approx(-std::log(2.0)));

    // width-2 standardize sums over the feature axis
    NamedBatch b(1);
    b.set("v", Array::from_values({1, 2}, {1.0, 2.0}));
    TransformPipeline pw;
    pw.standardize("v", {0.0, 0.0}, {2.0, 4.0});
    CHECK(pw.apply_forward_logdet(b).log_det.at("v")[0] == doctest::Approx(-std::log(2.0) - std::log(4.0)));

    // rename moves the accumulator, drop clears it
    NamedBatch c(1);
    c.set("v", Array::from_values({1, 1}, {2.0}));
    c.set("w", Array::from_values({1, 1}, {3.0}));
    TransformPipeline pm;
    pm.log({"v", "w"}).rename("v", "u").drop({"w"});
    auto res = pm.apply_forward_logdet(c);
    CHECK(res.log_det.count("v") == 0);
    CHECK(res.log_det.count("w") == 0);
    CHECK(res.log_det.at("u")[0] == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("json round trip preserves the pipeline including recorded splits") {
    TransformPipeline p = gaussian_pipeline();
    NamedBatch raw = gaussian_batch(4, 10, 16);
    p.apply(raw, Direction::forward);

    const std::string text = pipeline_to_json(p);
    TransformPipeline q = adapt::pipeline_from_json(text);
    CHECK(adapt::pipeline_to_json(q) == text);
    CHECK(q.transforms().size() == p.transforms().size());

    // a deserialized pipeline can split without ever running forward
    NamedBatch draws(2);
    draws.set("inference_variables", Array::from_values({2, 2}, {0.1, 0.2, 0.3, 0.4}));
    NamedBatch back = q.apply(draws, Direction::inverse, MissingPolicy::skip);
    CHECK(back.contains("mu"));
    CHECK(back.contains("sigma"));

    // without the recorded table the split is refused
    TransformPipeline fresh = gaussian_pipeline();
    CHECK_THROWS_WITH_AS(fresh.apply(draws, Direction::inverse, MissingPolicy::skip),
                         "transform 1 (concatenate): split extents unknown (no forward pass recorded and none "
                         "serialized)",
                         std::invalid_argument);
}

TEST_CASE("json parsing rejects unknown kinds and keys with the offending path") {
    CHECK_THROWS_WITH_AS(adapt::pipeline_from_json(R"([{"kind":"wobble"}])"),
                         "adapter[0]: unknown transform kind 'wobble'", std::invalid_argument);
    CHECK_THROWS_WITH_AS(adapt::pipeline_from_json(R"([{"kind":"log","names":["a"],"extra":1}])"),
                         "adapter[0]: unknown key 'extra'", std::invalid_argument);
    CHECK_THROWS_AS(adapt::pipeline_from_json(R"([{"kind":"standardize","name":"v","means":[0],"sds":[0]}])"),
                    std::invalid_argument);
    CHECK_THROWS_AS(adapt::pipeline_from_json(R"({"kind":"log"})"), std::invalid_argument);
}

TEST_CASE("produces reports names created by the pipeline") {
    TransformPipeline p = gaussian_pipeline();
    CHECK(p.produces("inference_variables"));
    CHECK(p.produces("summary_variables"));
    CHECK(p.produces("inference_conditions"));
    CHECK_FALSE(p.produces("mu"));
    CHECK_FALSE(p.produces("x"));
}
