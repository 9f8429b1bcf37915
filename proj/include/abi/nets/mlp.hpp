#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "abi/num/ops.hpp"
#include "abi/num/optimizer.hpp"
#include "abi/num/rng.hpp"

namespace abi::nets {

template <typename S>
num::Tensor<S> glorot_normal(const num::Shape& shape, std::int64_t fan_in, std::int64_t fan_out,
                             num::RngStream& rng) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    num::Tensor<S> t = num::Tensor<S>::zeros(shape);
    auto d = t.mutable_data();
    for (std::int64_t i = 0; i < t.numel(); ++i) d[static_cast<std::size_t>(i)] = static_cast<S>(rng.normal(0.0, sd));
    return t;
}

// Affine map x (..., in) -> x W + b (..., out). Glorot-normal weights, zero
// bias; zero_init makes the whole layer the zero map.
template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(std::int64_t in, std::int64_t out, num::RngStream& rng, bool zero_init = false)
        : weight_(zero_init ? num::Tensor<S>::zeros({in, out}) : glorot_normal<S>({in, out}, in, out, rng)),
          bias_(num::Tensor<S>::zeros({out})) {}

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        ps.add(prefix + ".weight", weight_);
        ps.add(prefix + ".bias", bias_);
    }

    num::Tensor<S> forward(const num::Tensor<S>& x) const { return num::add(num::matmul(x, weight_), bias_); }

    std::int64_t in_dim() const { return weight_.shape()[0]; }
    std::int64_t out_dim() const { return weight_.shape()[1]; }
    const num::Tensor<S>& weight() const { return weight_; }
    const num::Tensor<S>& bias() const { return bias_; }

private:
    num::Tensor<S> weight_, bias_;
};

// Feed-forward stack with GELU between layers and a linear output layer.
template <typename S>
class Mlp {
public:
    Mlp() = default;
    Mlp(std::int64_t in, const std::vector<std::int64_t>& hidden, std::int64_t out, num::RngStream& rng,
        bool zero_init_last = false) {
        std::int64_t prev = in;
        for (std::int64_t w : hidden) {
            layers_.emplace_back(prev, w, rng);
            prev = w;
        }
        layers_.emplace_back(prev, out, rng, zero_init_last);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i].register_params(ps, prefix + ".layer" + std::to_string(i));
    }

    num::Tensor<S> forward(const num::Tensor<S>& x) const {
        num::Tensor<S> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i].forward(h);
            if (i + 1 < layers_.size()) h = num::gelu(h);
        }
        return h;
    }

    std::int64_t out_dim() const { return layers_.back().out_dim(); }

private:
    std::vector<Linear<S>> layers_;
};

}  // namespace abi::nets
