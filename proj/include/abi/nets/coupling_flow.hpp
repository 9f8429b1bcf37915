#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "abi/nets/mlp.hpp"

namespace abi::nets {

namespace detail {

// Marsaglia-Tsang gamma sampler, unit scale.
inline double gamma_draw(num::RngStream& rng, double shape) {
    if (shape < 1.0) {
        const double u = rng.uniform();
        return gamma_draw(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = rng.normal(0.0, 1.0);
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

inline double student_t_draw(num::RngStream& rng, double dof) {
    const double chi2 = 2.0 * gamma_draw(rng, dof / 2.0);
    return rng.normal(0.0, 1.0) / std::sqrt(chi2 / dof);
}

template <typename S>
num::Tensor<S> reverse_cols(const num::Tensor<S>& x) {
    const std::int64_t d = x.shape().back();
    std::vector<num::Tensor<S>> cols;
    cols.reserve(static_cast<std::size_t>(d));
    for (std::int64_t j = d - 1; j >= 0; --j) cols.push_back(num::slice(x, 1, j, 1));
    return num::concat(cols, 1);
}

}  // namespace detail

enum class BaseDistribution { normal, student_t };

struct CouplingFlowConfig {
    std::int64_t num_blocks = 6;
    std::vector<std::int64_t> subnet_widths{128, 128};
    double clamp = 1.9;
    BaseDistribution base = BaseDistribution::normal;
    double dof = 50.0;  // Student-t degrees of freedom

    void validate() const {
        if (num_blocks < 1) throw std::invalid_argument("coupling flow: need at least one block");
        if (!(clamp > 0)) throw std::invalid_argument("coupling flow: clamp must be positive");
        if (base == BaseDistribution::student_t && !(dof > 2))
            throw std::invalid_argument("coupling flow: Student-t dof must exceed 2");
    }
};

// Affine coupling flow between the target and a simple base distribution.
// Block i leaves the first floor(d/2) coordinates (under the block's fixed
// ordering) untouched and maps the rest as x2' = x2 * exp(s~) + t with the
// soft-clamped scale s~ = c * tanh(s / c). Block 0 works in the identity
// ordering, later blocks in the reversed one (restored on output), so every
// coordinate is transformed while zero-initialized conditioners leave the
// whole flow an exact identity.
template <typename S>
class CouplingFlow {
public:
    CouplingFlow() = default;
    CouplingFlow(std::int64_t target_dim, std::int64_t condition_dim, CouplingFlowConfig cfg, num::RngStream& rng)
        : cfg_(cfg), dim_(target_dim), cond_dim_(condition_dim) {
        cfg_.validate();
        if (target_dim < 1) throw std::invalid_argument("coupling flow: target_dim must be >= 1");
        keep_ = dim_ / 2;
        const std::int64_t subnet_in = std::max<std::int64_t>(keep_ + cond_dim_, 1);
        std::vector<std::int64_t> hidden = cfg_.subnet_widths;
        for (std::int64_t i = 0; i < cfg_.num_blocks; ++i)
            subnets_.emplace_back(subnet_in, hidden, 2 * (dim_ - keep_), rng, /*zero_init_last=*/true);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        for (std::size_t i = 0; i < subnets_.size(); ++i)
            subnets_[i].register_params(ps, prefix + ".block" + std::to_string(i));
    }

    std::int64_t target_dim() const { return dim_; }
    std::int64_t condition_dim() const { return cond_dim_; }
    const CouplingFlowConfig& config() const { return cfg_; }

    // data -> latent; log_det is (batch,)
    std::pair<num::Tensor<S>, num::Tensor<S>> forward(const num::Tensor<S>& x, const num::Tensor<S>& cond) const {
        check_inputs(x, cond);
        const std::int64_t batch = x.shape()[0];
        num::Tensor<S> u = x;
        num::Tensor<S> log_det = num::Tensor<S>::zeros({batch});
        for (std::size_t i = 0; i < subnets_.size(); ++i) {
            if (i > 0 && dim_ > 1) u = detail::reverse_cols(u);
            num::Tensor<S> u1, st;
            scale_shift(i, u, cond, batch, u1, st);
            const std::int64_t m = dim_ - keep_;
            num::Tensor<S> s = clamp_scale(num::slice(st, 1, 0, m));
            num::Tensor<S> t = num::slice(st, 1, m, m);
            num::Tensor<S> u2 = num::slice(u, 1, keep_, m);
            num::Tensor<S> u2p = num::add(num::mul(u2, num::exp(s)), t);
            u = keep_ > 0 ? num::concat<S>({u1, u2p}, 1) : u2p;
            if (i > 0 && dim_ > 1) u = detail::reverse_cols(u);  // restore the coordinate order
            log_det = num::add(log_det, num::sum(s, 1, false));
        }
        if (!u.all_finite()) throw std::runtime_error("coupling flow: non-finite activations in forward");
        return {u, log_det};
    }

    // latent -> data, exact inverse of forward
    num::Tensor<S> inverse(const num::Tensor<S>& z, const num::Tensor<S>& cond) const {
        check_inputs(z, cond);
        const std::int64_t batch = z.shape()[0];
        num::Tensor<S> u = z;
        for (std::size_t i = subnets_.size(); i-- > 0;) {
            if (i > 0 && dim_ > 1) u = detail::reverse_cols(u);
            num::Tensor<S> u1, st;
            scale_shift(i, u, cond, batch, u1, st);
            const std::int64_t m = dim_ - keep_;
            num::Tensor<S> s = clamp_scale(num::slice(st, 1, 0, m));
            num::Tensor<S> t = num::slice(st, 1, m, m);
            num::Tensor<S> u2p = num::slice(u, 1, keep_, m);
            num::Tensor<S> u2 = num::div(num::sub(u2p, t), num::exp(s));
            u = keep_ > 0 ? num::concat<S>({u1, u2}, 1) : u2;
            if (i > 0 && dim_ > 1) u = detail::reverse_cols(u);
        }
        if (!u.all_finite()) throw std::runtime_error("coupling flow: non-finite activations in inverse");
        return u;
    }

    num::Tensor<S> base_log_prob(const num::Tensor<S>& z) const {
        constexpr double ln_2pi = 1.8378770664093454836;
        if (cfg_.base == BaseDistribution::normal) {
            num::Tensor<S> q = num::mul_scalar(num::sum(num::square(z), 1, false), S(-0.5));
            return num::add_scalar(q, static_cast<S>(-0.5 * static_cast<double>(dim_) * ln_2pi));
        }
        const double v = cfg_.dof;
        const double c = std::lgamma((v + 1.0) / 2.0) - std::lgamma(v / 2.0) - 0.5 * std::log(v * M_PI);
        num::Tensor<S> q = num::log(num::add_scalar(num::mul_scalar(num::square(z), S(1.0 / v)), S(1)));
        num::Tensor<S> lp = num::mul_scalar(num::sum(q, 1, false), S(-(v + 1.0) / 2.0));
        return num::add_scalar(lp, static_cast<S>(static_cast<double>(dim_) * c));
    }

    num::Tensor<S> log_prob(const num::Tensor<S>& x, const num::Tensor<S>& cond) const {
        auto [z, log_det] = forward(x, cond);
        return num::add(base_log_prob(z), log_det);
    }

    num::Tensor<S> sample_base(std::int64_t n, num::RngStream& rng) const {
        num::Tensor<S> z = num::Tensor<S>::zeros({n, dim_});
        auto d = z.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = static_cast<S>(cfg_.base == BaseDistribution::normal ? rng.normal(0.0, 1.0)
                                                                        : detail::student_t_draw(rng, cfg_.dof));
        return z;
    }

    // cond (n, cond_dim) -> draws (n, dim)
    num::Tensor<S> sample(std::int64_t n, const num::Tensor<S>& cond, num::RngStream& rng) const {
        num::NoGradGuard ng;
        return inverse(sample_base(n, rng), cond);
    }

private:
    void check_inputs(const num::Tensor<S>& x, const num::Tensor<S>& cond) const {
        if (x.dim() != 2 || x.shape()[1] != dim_)
            throw std::invalid_argument("coupling flow: expected (batch, " + std::to_string(dim_) + "), got " +
                                        num::shape_str(x.shape()));
        if (cond_dim_ > 0) {
            if (!cond.defined() || cond.dim() != 2 || cond.shape()[1] != cond_dim_ || cond.shape()[0] != x.shape()[0])
                throw std::invalid_argument("coupling flow: condition must be (batch, " + std::to_string(cond_dim_) +
                                            ")");
        }
    }

    // u1 gets the untouched half, st the raw conditioner output
    void scale_shift(std::size_t block, const num::Tensor<S>& u, const num::Tensor<S>& cond, std::int64_t batch,
                     num::Tensor<S>& u1, num::Tensor<S>& st) const {
        std::vector<num::Tensor<S>> parts;
        if (keep_ > 0) {
            u1 = num::slice(u, 1, 0, keep_);
            parts.push_back(u1);
        }
        if (cond_dim_ > 0) parts.push_back(cond);
        num::Tensor<S> in = parts.empty() ? num::Tensor<S>::ones({batch, 1})
                                          : (parts.size() == 1 ? parts[0] : num::concat(parts, 1));
        st = subnets_[block].forward(in);
    }

    num::Tensor<S> clamp_scale(const num::Tensor<S>& s) const {
        const S c = static_cast<S>(cfg_.clamp);
        return num::mul_scalar(num::tanh(num::mul_scalar(s, S(1) / c)), c);
    }

    CouplingFlowConfig cfg_;
    std::int64_t dim_ = 0, cond_dim_ = 0, keep_ = 0;
    std::vector<Mlp<S>> subnets_;
};

using CouplingFlowF = CouplingFlow<float>;

}  // namespace abi::nets
