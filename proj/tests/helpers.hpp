#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "abi/num/autodiff.hpp"
#include "abi/num/ops.hpp"
#include "abi/num/optimizer.hpp"
#include "abi/num/rng.hpp"

namespace testutil {

// Max relative error between reverse-mode gradients and central finite
// differences, taken over every element of every input. f maps the inputs to
// a scalar; inputs arrive tracked on the graph pass and untracked on the
// finite-difference passes. The denominator floor keeps finite-difference
// truncation noise on near-zero gradients from dominating the ratio.
template <typename F>
double max_grad_rel_err(F f, std::vector<abi::num::TensorD> inputs, double h = 1e-4, double floor = 1e-2) {
    using namespace abi::num;
    std::vector<TensorD> tracked;
    tracked.reserve(inputs.size());
    for (auto& t : inputs) tracked.push_back(make_leaf(t));
    TensorD loss = f(tracked);
    backward(loss);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        TensorD g = grad_of(tracked[k]);
        for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
            auto eval = [&](double delta) {
                std::vector<TensorD> alt;
                alt.reserve(inputs.size());
                for (std::size_t j = 0; j < inputs.size(); ++j) {
                    if (j == k) {
                        TensorD c = inputs[j].clone();
                        c.mutable_data()[static_cast<std::size_t>(i)] += delta;
                        alt.push_back(c);
                    } else {
                        alt.push_back(inputs[j].detached());
                    }
                }
                NoGradGuard ng;
                return f(alt).value();
            };
            double fd = (eval(h) - eval(-h)) / (2.0 * h);
            double ad = g.at(i);
            double err = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// Central-difference check of parameter gradients; registered leaves share
// buffers with the owning network, so in-place perturbation re-evaluates the
// same model. loss_fn must be deterministic.
template <typename S, typename LossFn>
double param_fd_err(abi::num::ParamSet<S>& ps, LossFn loss_fn, double h = 1e-5) {
    using namespace abi::num;
    ps.zero_grad();
    Tensor<S> loss = loss_fn();
    backward(loss);
    double worst = 0.0;
    for (auto& item : ps) {
        Tensor<S> g = grad_of(item.tensor);
        auto buf = item.tensor.mutable_data();
        for (std::int64_t i = 0; i < item.tensor.numel(); ++i) {
            const double orig = static_cast<double>(buf[static_cast<std::size_t>(i)]);
            double lp, lm;
            {
                NoGradGuard ng;
                buf[static_cast<std::size_t>(i)] = static_cast<S>(orig + h);
                lp = static_cast<double>(loss_fn().value());
                buf[static_cast<std::size_t>(i)] = static_cast<S>(orig - h);
                lm = static_cast<double>(loss_fn().value());
            }
            buf[static_cast<std::size_t>(i)] = static_cast<S>(orig);
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = static_cast<double>(g.at(i));
            worst = std::max(worst, std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-2}));
        }
    }
    return worst;
}

// fills every registered parameter, including zero-initialized layers
template <typename S>
void randomize_params(abi::num::ParamSet<S>& ps, abi::num::RngStream& rng, double sd) {
    for (auto& item : ps) {
        auto buf = item.tensor.mutable_data();
        for (auto& v : buf) v = static_cast<S>(rng.normal(0.0, sd));
    }
}

inline double vec_mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double vec_var(const std::vector<double>& v) {
    double m = vec_mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline abi::num::TensorD positive_rand(abi::num::RngStream& rng, abi::num::Shape shape, double lo = 0.5,
                                       double hi = 2.0) {
    return abi::num::rand_uniform<double>(rng, std::move(shape), lo, hi);
}

}  // namespace testutil
