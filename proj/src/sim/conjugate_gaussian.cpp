#include "abi/sim/conjugate_gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace abi::sim {

void ConjugateGaussianConfig::validate() const {
    if (!(prior_sd > 0)) throw std::invalid_argument("conjugate_gaussian: prior_sd must be positive");
    if (!(obs_sd > 0)) throw std::invalid_argument("conjugate_gaussian: obs_sd must be positive");
    if (n < 1) throw std::invalid_argument("conjugate_gaussian: n must be >= 1");
}

SimulatorSpec conjugate_gaussian_simulator(const ConjugateGaussianConfig& cfg) {
    cfg.validate();

    Stage prior;
    prior.name = "prior";
    prior.outputs = {"mu"};
    prior.run = [cfg](const NamedValues&, num::RngStream& rng) {
        NamedValues out;
        out.set_scalar("mu", rng.normal(cfg.prior_mean, cfg.prior_sd));
        return out;
    };

    Stage likelihood;
    likelihood.name = "likelihood";
    likelihood.inputs = {"mu"};
    likelihood.outputs = {"x"};
    likelihood.run = [cfg](const NamedValues& in, num::RngStream& rng) {
        const double mu = in.at("mu").item(0);
        std::vector<double> x(static_cast<std::size_t>(cfg.n));
        for (auto& v : x) v = rng.normal(mu, cfg.obs_sd);
        NamedValues out;
        out.set("x", num::Array::from_values({cfg.n}, std::move(x)));
        return out;
    };

    return make_simulator({prior, likelihood});
}

std::pair<double, double> conjugate_posterior(const ConjugateGaussianConfig& cfg, std::span<const double> x) {
    cfg.validate();
    if (static_cast<std::int64_t>(x.size()) != cfg.n)
        throw std::invalid_argument("conjugate_posterior: expected " + std::to_string(cfg.n) + " observations");
    double sum = 0;
    for (double v : x) sum += v;
    const double prior_prec = 1.0 / (cfg.prior_sd * cfg.prior_sd);
    const double obs_prec = 1.0 / (cfg.obs_sd * cfg.obs_sd);
    const double post_var = 1.0 / (prior_prec + static_cast<double>(cfg.n) * obs_prec);
    const double post_mean = post_var * (cfg.prior_mean * prior_prec + sum * obs_prec);
    return {post_mean, std::sqrt(post_var)};
}

double conjugate_lml(const ConjugateGaussianConfig& cfg, std::span<const double> x) {
    cfg.validate();
    if (static_cast<std::int64_t>(x.size()) != cfg.n)
        throw std::invalid_argument("conjugate_lml: expected " + std::to_string(cfg.n) + " observations");
    constexpr double ln_2pi = 1.8378770664093454836;
    const double n = static_cast<double>(cfg.n);
    const double tau2 = cfg.prior_sd * cfg.prior_sd;
    const double s2 = cfg.obs_sd * cfg.obs_sd;
    double sum = 0, sumsq = 0;
    for (double v : x) {
        sum += v;
        sumsq += v * v;
    }
    const double post_var = 1.0 / (1.0 / tau2 + n / s2);
    const double post_mean = post_var * (cfg.prior_mean / tau2 + sum / s2);
    return -0.5 * n * (ln_2pi + std::log(s2)) - 0.5 * (ln_2pi + std::log(tau2)) +
           0.5 * (ln_2pi + std::log(post_var)) -
           0.5 * (sumsq / s2 + cfg.prior_mean * cfg.prior_mean / tau2 - post_mean * post_mean / post_var);
}

}  // namespace abi::sim
