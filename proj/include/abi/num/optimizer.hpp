#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "abi/num/autodiff.hpp"
#include "abi/num/tensor.hpp"

namespace abi::num {

// Ordered, named collection of leaf tensors. Order is the persistence and
// optimizer-state order, so registration must be deterministic.
template <typename S>
class ParamSet {
public:
    struct Item {
        std::string name;
        Tensor<S> tensor;
    };

    // Replaces t with a tracked leaf sharing the same buffer and registers it.
    void add(const std::string& name, Tensor<S>& t) {
        if (find(name)) throw std::invalid_argument("params: duplicate name " + name);
        if (!t.tracked()) t = make_leaf(t, name);
        items_.push_back({name, t});
    }

    Tensor<S>* find(const std::string& name) {
        for (auto& it : items_)
            if (it.name == name) return &it.tensor;
        return nullptr;
    }

    std::size_t size() const { return items_.size(); }
    std::int64_t numel() const {
        std::int64_t n = 0;
        for (const auto& it : items_) n += it.tensor.numel();
        return n;
    }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    const Item& at(std::size_t i) const { return items_[i]; }
    Item& at(std::size_t i) { return items_[i]; }

    void zero_grad() {
        for (auto& it : items_) num::zero_grad(it.tensor);
    }

private:
    std::vector<Item> items_;
};

template <typename S>
struct AdamWConfig {
    S lr = S(1e-4);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
    S weight_decay = S(0);
};

// AdamW: bias-corrected adaptive moments plus weight decay applied directly to
// the parameters (decoupled from the gradient path). Moment buffers are kept
// in the parameter scalar type; checkpoints store them losslessly as f64.
template <typename S>
class AdamW {
public:
    AdamW() = default;

    AdamW(const ParamSet<S>& params, AdamWConfig<S> cfg) : cfg_(cfg) {
        for (const auto& it : params) {
            m_.push_back(Tensor<S>::zeros(it.tensor.shape()));
            v_.push_back(Tensor<S>::zeros(it.tensor.shape()));
        }
    }

    const AdamWConfig<S>& config() const { return cfg_; }
    std::int64_t step_count() const { return step_; }
    std::vector<Tensor<S>>& first_moments() { return m_; }
    std::vector<Tensor<S>>& second_moments() { return v_; }
    const std::vector<Tensor<S>>& first_moments() const { return m_; }
    const std::vector<Tensor<S>>& second_moments() const { return v_; }
    void set_step_count(std::int64_t t) { step_ = t; }

    // One update over all parameters; lr overrides the configured rate so a
    // schedule can drive it. Throws on non-finite gradients, naming the
    // offending parameter.
    void step(ParamSet<S>& params, S lr) {
        if (params.size() != m_.size()) throw std::invalid_argument("adamw: parameter count changed");
        ++step_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto& item = params.at(p);
            Tensor<S> g = grad_of(item.tensor);
            if (!g.all_finite())
                throw std::runtime_error("adamw: non-finite gradient for parameter " + item.name);
            auto pm = m_[p].mutable_data();
            auto pv = v_[p].mutable_data();
            auto pw = item.tensor.mutable_data();
            auto pg = g.data();
            for (std::size_t i = 0; i < pw.size(); ++i) {
                pm[i] = cfg_.beta1 * pm[i] + (S(1) - cfg_.beta1) * pg[i];
                pv[i] = cfg_.beta2 * pv[i] + (S(1) - cfg_.beta2) * pg[i] * pg[i];
                S mhat = static_cast<S>(pm[i] / bc1);
                S vhat = static_cast<S>(pv[i] / bc2);
                pw[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pw[i]);
            }
        }
    }

    void step(ParamSet<S>& params) { step(params, cfg_.lr); }

private:
    AdamWConfig<S> cfg_;
    std::vector<Tensor<S>> m_, v_;
    std::int64_t step_ = 0;
};

// Half-cosine decay from lr_max to lr_min across total_steps.
inline double cosine_lr(double lr_max, double lr_min, std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 1) return lr_max;
    double t = static_cast<double>(std::min(step, total_steps - 1)) / static_cast<double>(total_steps - 1);
    return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(3.141592653589793238 * t));
}

}  // namespace abi::num
