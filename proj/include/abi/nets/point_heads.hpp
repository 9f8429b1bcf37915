#pragma once

#include <string>
#include <utility>
#include <vector>

#include "abi/nets/mlp.hpp"

namespace abi::nets {

// squared error, summed over coordinates and averaged over rows
template <typename S>
num::Tensor<S> mean_score(const num::Tensor<S>& estimate, const num::Tensor<S>& target) {
    return num::mean(num::sum(num::square(num::sub(estimate, target)), -1, false));
}

// pinball loss: estimates (batch, levels, dim), target (batch, dim);
// rho_tau(u) = u (tau - 1[u < 0]) = max(tau u, (tau - 1) u)
template <typename S>
num::Tensor<S> quantile_score(const num::Tensor<S>& estimates, const num::Tensor<S>& target,
                              const std::vector<double>& levels) {
    if (estimates.dim() != 3 || estimates.shape()[1] != static_cast<std::int64_t>(levels.size()))
        throw std::invalid_argument("quantile score: estimates must be (batch, levels, dim)");
    for (double tau : levels)
        if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantile score: levels must lie in (0, 1)");
    const std::int64_t batch = estimates.shape()[0];
    const std::int64_t dim = estimates.shape()[2];
    num::Tensor<S> t3 = num::reshape(target, {batch, 1, dim});
    num::Tensor<S> total;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const S tau = static_cast<S>(levels[l]);
        num::Tensor<S> u = num::sub(num::slice(t3, 1, 0, 1), num::slice(estimates, 1, static_cast<std::int64_t>(l), 1));
        num::Tensor<S> rho = num::maximum(num::mul_scalar(u, tau), num::mul_scalar(u, tau - S(1)));
        num::Tensor<S> term = num::sum(num::sum(rho, 2, false), 1, false);  // (batch,)
        total = l == 0 ? term : num::add(total, term);
    }
    return num::mean(total);
}

struct PointHeadsConfig {
    std::vector<std::int64_t> trunk_widths{64, 64};
    std::vector<double> quantile_levels{0.1, 0.3, 0.5, 0.7, 0.9};

    void validate() const {
        if (trunk_widths.empty()) throw std::invalid_argument("point heads: trunk needs at least one width");
        for (double tau : quantile_levels)
            if (!(tau > 0.0 && tau < 1.0))
                throw std::invalid_argument("point heads: quantile levels must lie in (0, 1)");
    }
};

// Shared trunk with a mean head and independent per-level quantile heads,
// trained under their respective proper scoring rules.
template <typename S>
class PointHeads {
public:
    PointHeads() = default;
    PointHeads(std::int64_t target_dim, std::int64_t condition_dim, PointHeadsConfig cfg, num::RngStream& rng)
        : cfg_(cfg), dim_(target_dim) {
        cfg_.validate();
        std::vector<std::int64_t> hidden(cfg_.trunk_widths.begin(), cfg_.trunk_widths.end() - 1);
        trunk_ = Mlp<S>(condition_dim, hidden, cfg_.trunk_widths.back(), rng);
        mean_head_ = Linear<S>(cfg_.trunk_widths.back(), dim_, rng);
        quantile_head_ = Linear<S>(cfg_.trunk_widths.back(),
                                   static_cast<std::int64_t>(cfg_.quantile_levels.size()) * dim_, rng);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        trunk_.register_params(ps, prefix + ".trunk");
        mean_head_.register_params(ps, prefix + ".mean");
        quantile_head_.register_params(ps, prefix + ".quantiles");
    }

    std::int64_t target_dim() const { return dim_; }
    const std::vector<double>& levels() const { return cfg_.quantile_levels; }

    struct Output {
        num::Tensor<S> mean;       // (batch, dim)
        num::Tensor<S> quantiles;  // (batch, levels, dim)
    };

    Output forward(const num::Tensor<S>& cond) const {
        num::Tensor<S> h = num::gelu(trunk_.forward(cond));
        const std::int64_t batch = cond.shape()[0];
        num::Tensor<S> q = quantile_head_.forward(h);
        return {mean_head_.forward(h),
                num::reshape(q, {batch, static_cast<std::int64_t>(cfg_.quantile_levels.size()), dim_})};
    }

    num::Tensor<S> loss(const num::Tensor<S>& cond, const num::Tensor<S>& target) const {
        Output out = forward(cond);
        return num::add(mean_score<S>(out.mean, target), quantile_score<S>(out.quantiles, target, cfg_.quantile_levels));
    }

private:
    PointHeadsConfig cfg_;
    std::int64_t dim_ = 0;
    Mlp<S> trunk_;
    Linear<S> mean_head_, quantile_head_;
};

using PointHeadsF = PointHeads<float>;

}  // namespace abi::nets
