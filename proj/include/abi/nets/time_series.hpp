#pragma once

#include <string>
#include <vector>

#include "abi/nets/mlp.hpp"

namespace abi::nets {

struct TimeSeriesNetConfig {
    std::int64_t hidden = 64;
    std::vector<std::int64_t> projection_widths{64};
    std::int64_t summary_dim = 32;

    void validate() const {
        if (summary_dim < 1) throw std::invalid_argument("time series net: summary_dim must be >= 1");
        if (hidden < 1) throw std::invalid_argument("time series net: hidden width must be >= 1");
    }
};

// Gated recurrent encoder over (batch, steps, features), final hidden state
// projected to the summary. Steps are consumed strictly in time order.
template <typename S>
class TimeSeriesNet {
public:
    TimeSeriesNet() = default;
    TimeSeriesNet(std::int64_t feature_dim, TimeSeriesNetConfig cfg, num::RngStream& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::int64_t h = cfg_.hidden;
        gates_x_ = Linear<S>(feature_dim, 3 * h, rng);
        u_ = glorot_normal<S>({h, 3 * h}, h, 3 * h, rng);
        proj_ = Mlp<S>(h, cfg_.projection_widths, cfg_.summary_dim, rng);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        gates_x_.register_params(ps, prefix + ".gates_x");
        ps.add(prefix + ".gates_h", u_);
        proj_.register_params(ps, prefix + ".proj");
    }

    std::int64_t summary_dim() const { return cfg_.summary_dim; }

    num::Tensor<S> forward(const num::Tensor<S>& series) const {
        if (series.dim() != 3)
            throw std::invalid_argument("time series net: expected (batch, steps, features), got " +
                                        num::shape_str(series.shape()));
        const std::int64_t batch = series.shape()[0];
        const std::int64_t steps = series.shape()[1];
        const std::int64_t feat = series.shape()[2];
        if (steps < 1) throw std::invalid_argument("time series net: zero steps");
        const std::int64_t hd = cfg_.hidden;

        num::Tensor<S> h = num::Tensor<S>::zeros({batch, hd});
        for (std::int64_t t = 0; t < steps; ++t) {
            num::Tensor<S> xt = num::reshape(num::slice(series, 1, t, 1), {batch, feat});
            num::Tensor<S> gx = gates_x_.forward(xt);   // (B, 3H)
            num::Tensor<S> gh = num::matmul(h, u_);     // (B, 3H)
            num::Tensor<S> z = num::sigmoid(num::add(num::slice(gx, 1, 0, hd), num::slice(gh, 1, 0, hd)));
            num::Tensor<S> r = num::sigmoid(num::add(num::slice(gx, 1, hd, hd), num::slice(gh, 1, hd, hd)));
            num::Tensor<S> n =
                num::tanh(num::add(num::slice(gx, 1, 2 * hd, hd), num::mul(r, num::slice(gh, 1, 2 * hd, hd))));
            h = num::add(num::mul(num::one_minus(z), n), num::mul(z, h));
        }
        return proj_.forward(h);
    }

private:
    TimeSeriesNetConfig cfg_;
    Linear<S> gates_x_;
    num::Tensor<S> u_;  // hidden-to-gates weight, no bias
    Mlp<S> proj_;
};

using TimeSeriesNetF = TimeSeriesNet<float>;

}  // namespace abi::nets
