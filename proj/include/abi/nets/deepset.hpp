#pragma once

#include <optional>
#include <string>
#include <vector>

#include "abi/nets/mlp.hpp"

namespace abi::nets {

struct DeepSetConfig {
    std::vector<std::int64_t> phi_widths{64, 64};  // per-element encoder; last entry is the embedding width
    std::vector<std::int64_t> rho_widths{64};      // decoder hidden widths after pooling
    std::int64_t summary_dim = 8;

    void validate() const {
        if (summary_dim < 1) throw std::invalid_argument("deepset: summary_dim must be >= 1");
        if (phi_widths.empty()) throw std::invalid_argument("deepset: encoder needs at least one width");
    }
};

// Permutation-invariant encoder for exchangeable observation sets. Each
// element goes through phi, the set axis is pooled by concatenated mean and
// max, and rho maps the pooled vector to the summary.
template <typename S>
class DeepSet {
public:
    DeepSet() = default;
    DeepSet(std::int64_t feature_dim, DeepSetConfig cfg, num::RngStream& rng) : cfg_(cfg) {
        cfg_.validate();
        std::vector<std::int64_t> phi_hidden(cfg_.phi_widths.begin(), cfg_.phi_widths.end() - 1);
        phi_ = Mlp<S>(feature_dim, phi_hidden, cfg_.phi_widths.back(), rng);
        rho_ = Mlp<S>(2 * cfg_.phi_widths.back(), cfg_.rho_widths, cfg_.summary_dim, rng);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        phi_.register_params(ps, prefix + ".phi");
        rho_.register_params(ps, prefix + ".rho");
    }

    std::int64_t summary_dim() const { return cfg_.summary_dim; }

    // set_input (batch, set_size, features); mask (batch, set_size) with 1 for
    // valid elements. Masked elements are zeroed before pooling, so padding is
    // exactly invisible.
    num::Tensor<S> forward(const num::Tensor<S>& set_input, const num::Tensor<S>* mask = nullptr) const {
        if (set_input.dim() != 3)
            throw std::invalid_argument("deepset: expected (batch, set, features), got " +
                                        num::shape_str(set_input.shape()));
        const std::int64_t batch = set_input.shape()[0];
        const std::int64_t set_size = set_input.shape()[1];
        if (set_size < 1) throw std::invalid_argument("deepset: empty set axis");

        num::Tensor<S> h = phi_.forward(set_input);  // (B, S, E)

        num::Tensor<S> pooled_mean, pooled_max;
        if (mask) {
            if (mask->shape() != num::Shape{batch, set_size})
                throw std::invalid_argument("deepset: mask shape " + num::shape_str(mask->shape()) +
                                            " does not match set " + num::shape_str(set_input.shape()));
            auto mv = mask->data();
            for (std::int64_t b = 0; b < batch; ++b) {
                bool any = false;
                for (std::int64_t s = 0; s < set_size; ++s) any = any || mv[b * set_size + s] != S(0);
                if (!any) throw std::invalid_argument("deepset: all elements masked in row " + std::to_string(b));
            }
            num::Tensor<S> m3 = num::reshape(*mask, {batch, set_size, 1});
            num::Tensor<S> counts = num::sum(*mask, 1, true);                       // (B, 1)
            pooled_mean = num::div(num::sum(num::mul(h, m3), 1, false), counts);    // (B, E)
            // masked entries are pushed far below any finite activation
            num::Tensor<S> sink = num::mul_scalar(num::one_minus(m3), S(-1e30));
            pooled_max = num::max_along(num::add(num::mul(h, m3), sink), 1, false);
        } else {
            pooled_mean = num::mean(h, 1, false);
            pooled_max = num::max_along(h, 1, false);
        }
        return rho_.forward(num::concat<S>({pooled_mean, pooled_max}, 1));
    }

private:
    DeepSetConfig cfg_;
    Mlp<S> phi_, rho_;
};

using DeepSetF = DeepSet<float>;

}  // namespace abi::nets
