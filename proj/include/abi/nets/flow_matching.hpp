#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "abi/nets/mlp.hpp"

namespace abi::nets {

struct FlowMatchingConfig {
    std::vector<std::int64_t> vnet_widths{128, 128};
    std::int64_t time_freqs = 8;
    double sigma_min = 1e-4;
    std::int64_t sample_steps = 100;
    std::int64_t density_steps = 64;
    std::int64_t exact_trace_max_dim = 16;

    void validate() const {
        if (time_freqs < 1) throw std::invalid_argument("flow matching: need at least one time frequency");
        if (sample_steps < 1 || density_steps < 1)
            throw std::invalid_argument("flow matching: step counts must be >= 1");
        if (!(sigma_min >= 0 && sigma_min < 1))
            throw std::invalid_argument("flow matching: sigma_min must lie in [0, 1)");
    }
};

// Linear interpolation path between base noise and the target, with the
// matching velocity field the net regresses onto.
template <typename S>
std::pair<num::Tensor<S>, num::Tensor<S>> fm_path(const num::Tensor<S>& theta, const num::Tensor<S>& x0,
                                                  const num::Tensor<S>& t, double sigma_min) {
    // x_t = (1 - (1 - sigma_min) t) x0 + t theta ; v* = theta - (1 - sigma_min) x0
    num::Tensor<S> shrink = num::one_minus(num::mul_scalar(t, static_cast<S>(1.0 - sigma_min)));
    num::Tensor<S> x_t = num::add(num::mul(shrink, x0), num::mul(t, theta));
    num::Tensor<S> v_star = num::sub(theta, num::mul_scalar(x0, static_cast<S>(1.0 - sigma_min)));
    return {x_t, v_star};
}

// Continuous-time flow trained by velocity regression. Sampling integrates
// dx/dt = v(x, t, c) with Euler from noise at t=0 to the target at t=1;
// densities integrate the exact divergence backwards.
template <typename S>
class FlowMatching {
public:
    FlowMatching() = default;
    FlowMatching(std::int64_t target_dim, std::int64_t condition_dim, FlowMatchingConfig cfg, num::RngStream& rng)
        : cfg_(cfg), dim_(target_dim), cond_dim_(condition_dim) {
        cfg_.validate();
        if (target_dim < 1) throw std::invalid_argument("flow matching: target_dim must be >= 1");
        vnet_ = Mlp<S>(dim_ + 2 * cfg_.time_freqs + cond_dim_, cfg_.vnet_widths, dim_, rng,
                       /*zero_init_last=*/true);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        vnet_.register_params(ps, prefix + ".vnet");
    }

    std::int64_t target_dim() const { return dim_; }
    std::int64_t condition_dim() const { return cond_dim_; }
    const FlowMatchingConfig& config() const { return cfg_; }

    // sinusoidal features of t at geometric frequencies; t_col is (batch, 1)
    num::Tensor<S> time_embedding(const num::Tensor<S>& t_col) const {
        const std::int64_t batch = t_col.shape()[0];
        const std::int64_t f = cfg_.time_freqs;
        num::Tensor<S> emb = num::Tensor<S>::zeros({batch, 2 * f});
        auto d = emb.mutable_data();
        for (std::int64_t b = 0; b < batch; ++b) {
            const double t = static_cast<double>(t_col.at(b));
            for (std::int64_t k = 0; k < f; ++k) {
                const double w = 2.0 * M_PI * std::pow(2.0, static_cast<double>(k)) * t;
                d[static_cast<std::size_t>(b * 2 * f + k)] = static_cast<S>(std::sin(w));
                d[static_cast<std::size_t>(b * 2 * f + f + k)] = static_cast<S>(std::cos(w));
            }
        }
        return emb;
    }

    num::Tensor<S> velocity(const num::Tensor<S>& x, const num::Tensor<S>& t_col, const num::Tensor<S>& cond) const {
        check_condition(x.shape()[0], cond);
        std::vector<num::Tensor<S>> parts{x, time_embedding(t_col)};
        if (cond_dim_ > 0) parts.push_back(cond);
        return vnet_.forward(num::concat(parts, 1));
    }

    // mean over rows of the squared velocity regression error
    template <typename VFn>
    num::Tensor<S> loss_with(VFn v, const num::Tensor<S>& theta, const num::Tensor<S>& cond,
                             num::RngStream& rng) const {
        if (theta.dim() != 2 || theta.shape()[1] != dim_)
            throw std::invalid_argument("flow matching: theta must be (batch, " + std::to_string(dim_) + ")");
        const std::int64_t batch = theta.shape()[0];
        num::Tensor<S> x0 = num::randn<S>(rng, {batch, dim_});
        num::Tensor<S> t = num::rand_uniform<S>(rng, {batch, 1}, S(0), S(1));
        auto [x_t, v_star] = fm_path<S>(theta.detached(), x0, t, cfg_.sigma_min);
        num::Tensor<S> err = num::sub(v(x_t, t, cond), v_star);
        return num::mean(num::sum(num::square(err), 1, false));
    }

    num::Tensor<S> loss(const num::Tensor<S>& theta, const num::Tensor<S>& cond, num::RngStream& rng) const {
        return loss_with([this](const num::Tensor<S>& x, const num::Tensor<S>& t, const num::Tensor<S>& c) {
            return velocity(x, t, c);
        }, theta, cond, rng);
    }

    num::Tensor<S> sample(std::int64_t n, const num::Tensor<S>& cond, num::RngStream& rng,
                          std::int64_t steps = 0) const {
        num::NoGradGuard ng;
        if (steps <= 0) steps = cfg_.sample_steps;
        num::Tensor<S> x = num::randn<S>(rng, {n, dim_});
        const double h = 1.0 / static_cast<double>(steps);
        for (std::int64_t k = 0; k < steps; ++k) {
            num::Tensor<S> t = num::Tensor<S>::full({n, 1}, static_cast<S>(k * h));
            x = num::add(x, num::mul_scalar(velocity(x, t, cond), static_cast<S>(h)));
            if (!x.all_finite()) throw std::runtime_error("flow matching: non-finite state while sampling");
        }
        return x;
    }

    // exact change of variables integrated backwards from the sample;
    // the divergence is assembled one coordinate per backward pass
    num::Tensor<S> log_prob(const num::Tensor<S>& x_in, const num::Tensor<S>& cond, std::int64_t steps = 0) const {
        if (dim_ > cfg_.exact_trace_max_dim)
            throw std::invalid_argument("flow matching: target_dim " + std::to_string(dim_) +
                                        " exceeds the exact-trace limit " +
                                        std::to_string(cfg_.exact_trace_max_dim));
        if (steps <= 0) steps = cfg_.density_steps;
        const std::int64_t n = x_in.shape()[0];
        const double h = 1.0 / static_cast<double>(steps);

        num::Tensor<S> x = x_in.detached();
        std::vector<double> div(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t k = steps; k >= 1; --k) {
            num::Tensor<S> t = num::Tensor<S>::full({n, 1}, static_cast<S>(k * h));
            num::Tensor<S> xl = num::make_leaf(x);
            num::Tensor<S> v = velocity(xl, t, cond);
            for (std::int64_t j = 0; j < dim_; ++j) {
                num::zero_grad(xl);
                num::backward(num::sum(num::slice(v, 1, j, 1)));
                num::Tensor<S> g = num::grad_of(xl);
                for (std::int64_t b = 0; b < n; ++b)
                    div[static_cast<std::size_t>(b)] += h * static_cast<double>(g.at(b * dim_ + j));
            }
            num::NoGradGuard ng;
            x = num::sub(x, num::mul_scalar(v.detached(), static_cast<S>(h)));
            if (!x.all_finite()) throw std::runtime_error("flow matching: non-finite state in density pass");
        }
        clear_param_grads();

        constexpr double ln_2pi = 1.8378770664093454836;
        num::NoGradGuard ng;
        num::Tensor<S> base =
            num::add_scalar(num::mul_scalar(num::sum(num::square(x), 1, false), S(-0.5)),
                            static_cast<S>(-0.5 * static_cast<double>(dim_) * ln_2pi));
        num::Tensor<S> out = num::Tensor<S>::zeros({n});
        auto o = out.mutable_data();
        for (std::int64_t b = 0; b < n; ++b)
            o[static_cast<std::size_t>(b)] = static_cast<S>(static_cast<double>(base.at(b)) - div[static_cast<std::size_t>(b)]);
        return out;
    }

private:
    void check_condition(std::int64_t batch, const num::Tensor<S>& cond) const {
        if (cond_dim_ > 0) {
            if (!cond.defined() || cond.dim() != 2 || cond.shape()[1] != cond_dim_ || cond.shape()[0] != batch)
                throw std::invalid_argument("flow matching: condition must be (batch, " + std::to_string(cond_dim_) +
                                            ")");
        }
    }

    // log_prob backpropagates through registered parameters as a side effect;
    // their accumulators are scrubbed so a later training step starts clean.
    void clear_param_grads() const {
        auto& self = const_cast<FlowMatching<S>&>(*this);
        num::ParamSet<S> tmp;
        self.vnet_.register_params(tmp, "tmp");
        tmp.zero_grad();
    }

    FlowMatchingConfig cfg_;
    std::int64_t dim_ = 0, cond_dim_ = 0;
    Mlp<S> vnet_;
};

using FlowMatchingF = FlowMatching<float>;

}  // namespace abi::nets
