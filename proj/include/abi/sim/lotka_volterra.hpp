#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "abi/sim/simulator.hpp"

namespace abi::sim {

struct LotkaVolterraConfig {
    std::array<double, 2> t_span{0.0, 5.0};
    std::int64_t t_steps = 100;
    std::array<double, 2> initial_state{1.0, 1.0};
    std::int64_t subsample = 10;
    double obs_prob = 1.0;
    double noise_scale = 0.1;
    std::vector<std::int64_t> lags{2, 5};
    // Internal integration substeps per output grid cell; the output grid is
    // unchanged. Values > 1 keep the fixed-step integrator accurate at fast
    // prior corners.
    std::int64_t substeps = 4;
    bool with_summaries = false;

    void validate() const;
};

// dx/dt = alpha*x - beta*x*y, dy/dt = -gamma*y + delta*x*y
std::pair<double, double> lv_rhs(std::pair<double, double> state, const std::array<double, 4>& params);

// Classical 4th-order fixed-step integration on t_grid. Returns the
// trajectory row-major as (len(t_grid), dim). Throws on non-finite state,
// reporting the time index.
std::vector<double> integrate_rk4(const std::function<void(double, std::span<const double>, std::span<double>)>& rhs,
                                  std::span<const double> initial_state, std::span<const double> t_grid);

struct Observation {
    std::vector<double> x, y, t, mask;
};

// Multiplicative log-normal noise (value * exp(eps*noise_scale)), stride
// subsampling, then independent per-step retention with probability obs_prob.
// Dropped steps are zero-padded in x/y with mask 0 so shapes stay
// rectangular; grid times are kept. Throws when every step is dropped.
Observation observation_model(std::span<const double> x, std::span<const double> y, std::span<const double> t,
                              std::int64_t subsample, double obs_prob, double noise_scale, num::RngStream& stream);

// Each parameter is sigmoid(z)*3.9 + 0.1 with z standard normal; support
// (0.1, 4.0). Order: alpha, beta, gamma, delta.
std::array<double, 4> lv_prior(num::RngStream& stream);

struct ExpertStats {
    std::array<double, 2> means;
    std::array<double, 2> log_vars;
    std::vector<double> auto_corrs;  // per-series autocorrelation at each lag: x lags..., y lags...
    double cross_corr;
    double period;  // in samples, from the discrete Fourier peak of the prey series
};

ExpertStats expert_stats(std::span<const double> x, std::span<const double> y,
                         const std::vector<std::int64_t>& lags);

// Stages: prior -> dynamics -> observation [-> summaries].
SimulatorSpec lotka_volterra_simulator(const LotkaVolterraConfig& cfg = {});

}  // namespace abi::sim
