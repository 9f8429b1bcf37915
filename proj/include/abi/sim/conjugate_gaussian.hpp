#pragma once

#include <span>

#include "abi/sim/simulator.hpp"

namespace abi::sim {

// mu ~ N(prior_mean, prior_sd^2); x_1..x_n ~ N(mu, obs_sd^2) iid. The
// posterior and marginal likelihood are available in closed form, which makes
// this model the calibration oracle for everything downstream.
struct ConjugateGaussianConfig {
    double prior_mean = 0.0;
    double prior_sd = 1.0;
    double obs_sd = 1.0;
    std::int64_t n = 10;

    void validate() const;
};

// Stages: prior (mu) -> likelihood (x of shape (n,)).
SimulatorSpec conjugate_gaussian_simulator(const ConjugateGaussianConfig& cfg = {});

// Posterior over mu given one dataset row: (mean, sd).
std::pair<double, double> conjugate_posterior(const ConjugateGaussianConfig& cfg, std::span<const double> x);

// Exact log marginal likelihood of one dataset row.
double conjugate_lml(const ConjugateGaussianConfig& cfg, std::span<const double> x);

}  // namespace abi::sim
