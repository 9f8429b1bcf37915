#pragma once

#include <string>
#include <vector>

#include "abi/nets/mlp.hpp"

namespace abi::nets {

struct ClassifierConfig {
    std::vector<std::int64_t> trunk_widths{64, 64};
    std::int64_t num_classes = 2;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("classifier: need at least two classes");
    }
};

// Softmax classifier over flat feature rows; the final layer starts at zero so
// an untrained classifier is exactly uniform.
template <typename S>
class Classifier {
public:
    Classifier() = default;
    Classifier(std::int64_t input_dim, ClassifierConfig cfg, num::RngStream& rng) : cfg_(cfg) {
        cfg_.validate();
        net_ = Mlp<S>(input_dim, cfg_.trunk_widths, cfg_.num_classes, rng, /*zero_init_last=*/true);
    }

    void register_params(num::ParamSet<S>& ps, const std::string& prefix) {
        net_.register_params(ps, prefix + ".net");
    }

    std::int64_t num_classes() const { return cfg_.num_classes; }

    num::Tensor<S> logits(const num::Tensor<S>& x) const { return net_.forward(x); }

private:
    ClassifierConfig cfg_;
    Mlp<S> net_;
};

// categorical cross-entropy, averaged over rows
template <typename S>
num::Tensor<S> cross_entropy(const num::Tensor<S>& logits, const std::vector<std::int64_t>& labels) {
    const std::int64_t batch = logits.shape()[0];
    const std::int64_t classes = logits.shape()[1];
    if (static_cast<std::int64_t>(labels.size()) != batch)
        throw std::invalid_argument("cross entropy: one label per row required");
    num::Tensor<S> onehot = num::Tensor<S>::zeros({batch, classes});
    auto d = onehot.mutable_data();
    for (std::int64_t b = 0; b < batch; ++b) {
        const std::int64_t y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= classes) throw std::invalid_argument("cross entropy: label out of range");
        d[static_cast<std::size_t>(b * classes + y)] = S(1);
    }
    num::Tensor<S> picked = num::sum(num::mul(num::log_softmax(logits, 1), onehot), 1, false);
    return num::neg(num::mean(picked));
}

template <typename S>
num::Tensor<S> posterior_model_probs(const num::Tensor<S>& logits) {
    return num::softmax(logits, 1);
}

// Density-ratio training pairs: positives are the joint (theta, condition)
// rows, negatives rotate theta by a random nonzero offset so no row keeps its
// own condition.
template <typename S>
num::Tensor<S> shuffled_rows(const num::Tensor<S>& theta, num::RngStream& rng) {
    const std::int64_t batch = theta.shape()[0];
    if (batch < 2) throw std::invalid_argument("ratio loss: need at least two rows to shuffle");
    const std::int64_t width = theta.numel() / batch;
    const std::int64_t shift = rng.randint(1, batch);
    num::Tensor<S> out = num::Tensor<S>::zeros(theta.shape());
    auto dst = out.mutable_data();
    auto src = theta.data();
    for (std::int64_t b = 0; b < batch; ++b) {
        const std::int64_t from = (b + shift) % batch;
        for (std::int64_t j = 0; j < width; ++j)
            dst[static_cast<std::size_t>(b * width + j)] = src[static_cast<std::size_t>(from * width + j)];
    }
    return out;
}

// Binary logistic loss whose optimum is the log density ratio
// log p(theta, c) / (p(theta) p(c)); class 1 = joint, class 0 = shuffled.
template <typename S>
num::Tensor<S> binary_ratio_loss(const Classifier<S>& clf, const num::Tensor<S>& theta, const num::Tensor<S>& cond,
                                 num::RngStream& rng) {
    if (clf.num_classes() != 2) throw std::invalid_argument("ratio loss: classifier must have two classes");
    const std::int64_t batch = theta.shape()[0];
    num::Tensor<S> neg_theta = shuffled_rows(theta, rng);
    num::Tensor<S> pos_in = num::concat<S>({theta.detached(), cond.detached()}, 1);
    num::Tensor<S> neg_in = num::concat<S>({neg_theta, cond.detached()}, 1);
    num::Tensor<S> both = num::concat<S>({pos_in, neg_in}, 0);
    std::vector<std::int64_t> labels(static_cast<std::size_t>(2 * batch), 0);
    for (std::int64_t b = 0; b < batch; ++b) labels[static_cast<std::size_t>(b)] = 1;
    return cross_entropy(clf.logits(both), labels);
}

// log ratio estimate for given (theta, condition) rows
template <typename S>
num::Tensor<S> log_ratio(const Classifier<S>& clf, const num::Tensor<S>& theta, const num::Tensor<S>& cond) {
    num::Tensor<S> lg = clf.logits(num::concat<S>({theta, cond}, 1));
    return num::sub(num::reshape(num::slice(lg, 1, 1, 1), {lg.shape()[0]}),
                    num::reshape(num::slice(lg, 1, 0, 1), {lg.shape()[0]}));
}

using ClassifierF = Classifier<float>;

}  // namespace abi::nets
