#include "abi/sim/lotka_volterra.hpp"

#include <cmath>
#include <stdexcept>

namespace abi::sim {

void LotkaVolterraConfig::validate() const {
    if (!(t_span[1] > t_span[0])) throw std::invalid_argument("lotka_volterra: t_span must increase");
    if (t_steps < 2) throw std::invalid_argument("lotka_volterra: t_steps must be >= 2");
    if (!(initial_state[0] > 0) || !(initial_state[1] > 0))
        throw std::invalid_argument("lotka_volterra: initial populations must be positive");
    if (subsample < 1) throw std::invalid_argument("lotka_volterra: subsample must be >= 1");
    if (!(obs_prob > 0) || obs_prob > 1) throw std::invalid_argument("lotka_volterra: obs_prob must be in (0,1]");
    if (noise_scale < 0) throw std::invalid_argument("lotka_volterra: noise_scale must be >= 0");
    if (substeps < 1) throw std::invalid_argument("lotka_volterra: substeps must be >= 1");
    for (auto l : lags)
        if (l < 1) throw std::invalid_argument("lotka_volterra: lags must be >= 1");
}

std::pair<double, double> lv_rhs(std::pair<double, double> state, const std::array<double, 4>& params) {
    const auto [x, y] = state;
    const auto [alpha, beta, gamma, delta] = params;
    return {alpha * x - beta * x * y, -gamma * y + delta * x * y};
}

std::vector<double> integrate_rk4(const std::function<void(double, std::span<const double>, std::span<double>)>& rhs,
                                  std::span<const double> initial_state, std::span<const double> t_grid) {
    const std::size_t dim = initial_state.size();
    const std::size_t steps = t_grid.size();
    if (steps < 1) throw std::invalid_argument("integrate_rk4: empty time grid");
    for (std::size_t i = 0; i + 1 < steps; ++i)
        if (!(t_grid[i + 1] > t_grid[i])) throw std::invalid_argument("integrate_rk4: t_grid must strictly increase");

    std::vector<double> out(steps * dim);
    std::vector<double> s(initial_state.begin(), initial_state.end());
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    std::copy(s.begin(), s.end(), out.begin());
    for (std::size_t i = 0; i + 1 < steps; ++i) {
        const double t = t_grid[i];
        const double h = t_grid[i + 1] - t;
        rhs(t, s, k1);
        for (std::size_t d = 0; d < dim; ++d) tmp[d] = s[d] + 0.5 * h * k1[d];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t d = 0; d < dim; ++d) tmp[d] = s[d] + 0.5 * h * k2[d];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t d = 0; d < dim; ++d) tmp[d] = s[d] + h * k3[d];
        rhs(t + h, tmp, k4);
        for (std::size_t d = 0; d < dim; ++d) s[d] += h / 6.0 * (k1[d] + 2 * k2[d] + 2 * k3[d] + k4[d]);
        for (std::size_t d = 0; d < dim; ++d)
            if (!std::isfinite(s[d]))
                throw std::runtime_error("integrate_rk4: non-finite state at time index " + std::to_string(i + 1));
        std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    }
    return out;
}

Observation observation_model(std::span<const double> x, std::span<const double> y, std::span<const double> t,
                              std::int64_t subsample, double obs_prob, double noise_scale, num::RngStream& stream) {
    if (x.size() != y.size() || x.size() != t.size())
        throw std::invalid_argument("observation_model: x, y, t lengths differ");
    if (subsample < 1) throw std::invalid_argument("observation_model: subsample must be >= 1");
    if (!(obs_prob > 0) || obs_prob > 1) throw std::invalid_argument("observation_model: obs_prob must be in (0,1]");
    if (noise_scale < 0) throw std::invalid_argument("observation_model: noise_scale must be >= 0");

    Observation obs;
    bool any = false;
    for (std::size_t i = 0; i < x.size(); i += static_cast<std::size_t>(subsample)) {
        const double ex = stream.normal();
        const double ey = stream.normal();
        const double u = stream.uniform();
        const bool kept = u < obs_prob;
        obs.t.push_back(t[i]);
        if (kept) {
            obs.x.push_back(x[i] * std::exp(ex * noise_scale));
            obs.y.push_back(y[i] * std::exp(ey * noise_scale));
            obs.mask.push_back(1.0);
            any = true;
        } else {
            obs.x.push_back(0.0);
            obs.y.push_back(0.0);
            obs.mask.push_back(0.0);
        }
    }
    if (!any) throw std::runtime_error("observation_model: all steps dropped");
    return obs;
}

std::array<double, 4> lv_prior(num::RngStream& stream) {
    std::array<double, 4> p;
    for (auto& v : p) {
        const double z = stream.normal();
        v = 1.0 / (1.0 + std::exp(-z)) * 3.9 + 0.1;
    }
    return p;
}

namespace {

double series_mean(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Autocovariance at the given lag over total-variance normalization.
double autocorr(std::span<const double> v, double m, double c0, std::int64_t lag) {
    double c = 0;
    for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < v.size(); ++t)
        c += (v[t] - m) * (v[t + static_cast<std::size_t>(lag)] - m);
    return c / c0;
}

}  // namespace

ExpertStats expert_stats(std::span<const double> x, std::span<const double> y,
                         const std::vector<std::int64_t>& lags) {
    if (x.size() != y.size()) throw std::invalid_argument("expert_stats: series lengths differ");
    std::int64_t max_lag = 0;
    for (auto l : lags) max_lag = std::max(max_lag, l);
    const auto n = static_cast<std::int64_t>(x.size());
    if (n <= max_lag + 1) throw std::invalid_argument("expert_stats: series too short for requested lags");

    ExpertStats st;
    st.means = {series_mean(x), series_mean(y)};
    double cx = 0, cy = 0, cxy = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dx = x[static_cast<std::size_t>(i)] - st.means[0];
        const double dy = y[static_cast<std::size_t>(i)] - st.means[1];
        cx += dx * dx;
        cy += dy * dy;
        cxy += dx * dy;
    }
    if (cx == 0.0 || cy == 0.0) throw std::runtime_error("expert_stats: zero-variance series");
    st.log_vars = {std::log(cx / static_cast<double>(n)), std::log(cy / static_cast<double>(n))};
    for (auto l : lags) st.auto_corrs.push_back(autocorr(x, st.means[0], cx, l));
    for (auto l : lags) st.auto_corrs.push_back(autocorr(y, st.means[1], cy, l));
    st.cross_corr = cxy / std::sqrt(cx * cy);

    // Dominant period of the prey series: reciprocal of the peak frequency of
    // the Fourier magnitude spectrum, zero bin excluded.
    const std::int64_t kmax = n / 2;
    double best_mag = -1.0;
    std::int64_t best_k = 1;
    for (std::int64_t k = 1; k <= kmax; ++k) {
        double re = 0, im = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double ang = -2.0 * 3.141592653589793238 * static_cast<double>(k * i) / static_cast<double>(n);
            re += x[static_cast<std::size_t>(i)] * std::cos(ang);
            im += x[static_cast<std::size_t>(i)] * std::sin(ang);
        }
        const double mag = re * re + im * im;
        if (mag > best_mag) {
            best_mag = mag;
            best_k = k;
        }
    }
    st.period = static_cast<double>(n) / static_cast<double>(best_k);
    return st;
}

SimulatorSpec lotka_volterra_simulator(const LotkaVolterraConfig& cfg) {
    cfg.validate();

    Stage prior;
    prior.name = "prior";
    prior.outputs = {"alpha", "beta", "gamma", "delta"};
    prior.run = [](const NamedValues&, num::RngStream& rng) {
        const auto p = lv_prior(rng);
        NamedValues out;
        out.set_scalar("alpha", p[0]);
        out.set_scalar("beta", p[1]);
        out.set_scalar("gamma", p[2]);
        out.set_scalar("delta", p[3]);
        return out;
    };

    Stage dynamics;
    dynamics.name = "dynamics";
    dynamics.inputs = {"alpha", "beta", "gamma", "delta"};
    dynamics.outputs = {"x", "y", "t"};
    dynamics.run = [cfg](const NamedValues& in, num::RngStream&) {
        const std::array<double, 4> p{in.at("alpha").item(0), in.at("beta").item(0), in.at("gamma").item(0),
                                      in.at("delta").item(0)};
        const std::int64_t fine_steps = (cfg.t_steps - 1) * cfg.substeps + 1;
        std::vector<double> grid(static_cast<std::size_t>(fine_steps));
        for (std::int64_t i = 0; i < fine_steps; ++i)
            grid[static_cast<std::size_t>(i)] =
                cfg.t_span[0] + (cfg.t_span[1] - cfg.t_span[0]) * static_cast<double>(i) /
                                    static_cast<double>(fine_steps - 1);
        auto rhs = [&p](double, std::span<const double> s, std::span<double> ds) {
            auto [dx, dy] = lv_rhs({s[0], s[1]}, p);
            ds[0] = dx;
            ds[1] = dy;
        };
        const std::array<double, 2> s0 = {cfg.initial_state[0], cfg.initial_state[1]};
        const auto traj = integrate_rk4(rhs, s0, grid);
        std::vector<double> x(static_cast<std::size_t>(cfg.t_steps)), y(x.size()), t(x.size());
        for (std::int64_t i = 0; i < cfg.t_steps; ++i) {
            const std::size_t j = static_cast<std::size_t>(i * cfg.substeps);
            x[static_cast<std::size_t>(i)] = traj[2 * j];
            y[static_cast<std::size_t>(i)] = traj[2 * j + 1];
            t[static_cast<std::size_t>(i)] = grid[j];
        }
        NamedValues out;
        out.set("x", num::Array::from_values({cfg.t_steps}, std::move(x)));
        out.set("y", num::Array::from_values({cfg.t_steps}, std::move(y)));
        out.set("t", num::Array::from_values({cfg.t_steps}, std::move(t)));
        return out;
    };

    Stage observation;
    observation.name = "observation";
    observation.inputs = {"x", "y", "t"};
    observation.outputs = {"observed_x", "observed_y", "observed_t", "observed_mask"};
    observation.run = [cfg](const NamedValues& in, num::RngStream& rng) {
        const auto x = in.at("x").to_doubles();
        const auto y = in.at("y").to_doubles();
        const auto t = in.at("t").to_doubles();
        Observation obs = observation_model(x, y, t, cfg.subsample, cfg.obs_prob, cfg.noise_scale, rng);
        const auto len = static_cast<std::int64_t>(obs.x.size());
        NamedValues out;
        out.set("observed_x", num::Array::from_values({len}, std::move(obs.x)));
        out.set("observed_y", num::Array::from_values({len}, std::move(obs.y)));
        out.set("observed_t", num::Array::from_values({len}, std::move(obs.t)));
        out.set("observed_mask", num::Array::from_values({len}, std::move(obs.mask)));
        return out;
    };

    std::vector<Stage> stages{prior, dynamics, observation};

    if (cfg.with_summaries) {
        Stage summaries;
        summaries.name = "summaries";
        summaries.inputs = {"observed_x", "observed_y"};
        summaries.outputs = {"means", "log_vars", "auto_corrs", "cross_corr", "period"};
        summaries.run = [cfg](const NamedValues& in, num::RngStream&) {
            const auto x = in.at("observed_x").to_doubles();
            const auto y = in.at("observed_y").to_doubles();
            const ExpertStats st = expert_stats(x, y, cfg.lags);
            NamedValues out;
            out.set("means", num::Array::from_values({2}, {st.means[0], st.means[1]}));
            out.set("log_vars", num::Array::from_values({2}, {st.log_vars[0], st.log_vars[1]}));
            out.set("auto_corrs",
                    num::Array::from_values({static_cast<std::int64_t>(st.auto_corrs.size())}, st.auto_corrs));
            out.set("cross_corr", num::Array::from_values({1}, {st.cross_corr}));
            out.set("period", num::Array::from_values({1}, {st.period}));
            return out;
        };
        stages.push_back(summaries);
    }

    return make_simulator(std::move(stages));
}

}  // namespace abi::sim
