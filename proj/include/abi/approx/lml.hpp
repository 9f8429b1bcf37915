#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "abi/approx/estimator.hpp"
#include "abi/approx/train.hpp"

namespace abi::approx {

struct LogMarginalEstimate {
    double mean = 0.0;
    double sd = 0.0;
    bool degenerate_sd = false;  // single draw, spread not measurable
};

// Bridge identity: log p(D) = log p(D|θ) + log p(θ) − log p(θ|D) for every θ.
// With surrogate densities the right side varies over draws, so its mean is
// the estimate and its spread measures approximation error. Callbacks take a
// NamedBatch of θ draws (batch axis = draws) and return one value per draw.
template <typename SampleThetas, typename LogPosterior, typename LogLikelihood, typename LogPrior>
LogMarginalEstimate log_marginal_likelihood_with(SampleThetas&& sample_thetas, LogPosterior&& log_posterior,
                                                 LogLikelihood&& log_likelihood, LogPrior&& log_prior,
                                                 std::int64_t num_theta) {
    if (num_theta < 1) throw std::invalid_argument("log marginal likelihood: num_theta must be >= 1");
    sim::NamedBatch thetas = sample_thetas(num_theta);
    std::vector<double> post = log_posterior(thetas);
    std::vector<double> lik = log_likelihood(thetas);
    std::vector<double> prior = log_prior(thetas);
    const std::size_t n = static_cast<std::size_t>(num_theta);
    if (post.size() != n || lik.size() != n || prior.size() != n)
        throw std::invalid_argument("log marginal likelihood: density callbacks must return one value per draw");

    std::vector<double> value(n);
    for (std::size_t t = 0; t < n; ++t) {
        if (!std::isfinite(prior[t]))
            throw std::runtime_error("log marginal likelihood: draw " + std::to_string(t) +
                                     " falls outside the prior support");
        if (!std::isfinite(lik[t]) || !std::isfinite(post[t]))
            throw std::runtime_error("log marginal likelihood: non-finite log density at draw " + std::to_string(t));
        value[t] = lik[t] + prior[t] - post[t];
    }

    double mean = 0.0;
    for (double v : value) mean += v;
    mean /= static_cast<double>(n);
    double sd = 0.0;
    if (n > 1) {
        double ss = 0.0;
        for (double v : value) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return {mean, sd, num_theta == 1};
}

// Marginal likelihood of one observed dataset from a posterior bundle and a
// likelihood surrogate trained on the same joint model. θ comes from the
// posterior bundle, keeping the surrogates in the region they were trained on.
inline LogMarginalEstimate log_marginal_likelihood(
    const EstimatorBundle& posterior, const EstimatorBundle& likelihood,
    const std::function<std::vector<double>(const sim::NamedBatch&)>& prior_log_density,
    const sim::NamedBatch& observed, std::int64_t num_theta, num::RngStream& rng) {
    if (observed.batch_size() != 1)
        throw std::invalid_argument("log marginal likelihood: expected a single observed dataset (batch size 1)");

    auto joint = [&](const sim::NamedBatch& thetas) {
        sim::NamedBatch j = gather_batch_rows(observed, std::vector<std::int64_t>(
                                                            static_cast<std::size_t>(thetas.batch_size()), 0));
        for (const auto& [name, value] : thetas.items()) j.set(name, value);
        return j;
    };

    return log_marginal_likelihood_with(
        [&](std::int64_t t) {
            sim::NamedBatch draws = posterior.sample(observed, t, rng);
            sim::NamedBatch flat(t);
            for (const auto& [name, value] : draws.items()) {
                num::Shape shape{t};
                for (std::size_t ax = 2; ax < value.shape().size(); ++ax) shape.push_back(value.shape()[ax]);
                flat.set(name, value.reshaped(shape));
            }
            return flat;
        },
        [&](const sim::NamedBatch& th) { return posterior.log_prob(joint(th)); },
        [&](const sim::NamedBatch& th) { return likelihood.log_prob(joint(th)); }, prior_log_density, num_theta);
}

}  // namespace abi::approx
