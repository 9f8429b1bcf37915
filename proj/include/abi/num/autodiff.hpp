#pragma once

#include <algorithm>
#include <memory>
#include <unordered_set>

#include "abi/num/tensor.hpp"

namespace abi::num {

// Node in the reverse-mode tape. Interior nodes carry a closure that takes the
// upstream gradient and accumulates contributions into the parents' grad
// buffers via accumulate_grad(). Leaves (parameters, tracked inputs) have no
// closure; their grad survives backward() so optimizers can read it.
template <typename S>
struct GradNode {
    Shape shape;
    std::string label;
    bool leaf = false;
    std::vector<std::shared_ptr<GradNode<S>>> parents;
    std::function<void(const Tensor<S>&)> backprop;
    Tensor<S> grad;  // undefined until the first contribution arrives
};

template <typename S>
inline void accumulate_grad(const std::shared_ptr<GradNode<S>>& node, const Tensor<S>& contribution) {
    if (!node) return;
    if (contribution.shape() != node->shape)
        throw std::runtime_error("backward: gradient shape " + shape_str(contribution.shape()) +
                                 " does not match node shape " + shape_str(node->shape) +
                                 (node->label.empty() ? "" : " for " + node->label));
    if (!node->grad.defined()) {
        node->grad = contribution.clone();
        return;
    }
    auto dst = node->grad.mutable_data();
    auto src = contribution.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

namespace detail {
thread_local inline int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// Scoped switch that stops ops from recording graph nodes.
struct NoGradGuard {
    NoGradGuard() { ++detail::no_grad_depth; }
    ~NoGradGuard() { --detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Marks a tensor as a graph leaf. Returns the same buffer with a leaf node
// attached; gradients accumulate on the node across backward() calls until
// zero_grad().
template <typename S>
inline Tensor<S> make_leaf(const Tensor<S>& t, std::string label = {}) {
    Tensor<S> out = t.detached();
    auto node = std::make_shared<GradNode<S>>();
    node->shape = t.shape();
    node->label = std::move(label);
    node->leaf = true;
    out.set_node(std::move(node));
    return out;
}

template <typename S>
inline void zero_grad(Tensor<S>& t) {
    if (t.node()) t.node()->grad = Tensor<S>();
}

// Accumulated gradient of a leaf; exact zeros when nothing reached it.
template <typename S>
inline Tensor<S> grad_of(const Tensor<S>& t) {
    if (!t.node()) throw std::invalid_argument("grad_of: tensor is not tracked");
    if (!t.node()->grad.defined()) return Tensor<S>::zeros(t.shape());
    return t.node()->grad;
}

namespace detail {

template <typename S>
inline std::vector<GradNode<S>*> topo_order(GradNode<S>* root) {
    // Iterative post-order DFS; result has parents before children reversed,
    // i.e. reverse iteration gives a valid backward sweep order.
    std::vector<GradNode<S>*> order;
    std::unordered_set<GradNode<S>*> visited;
    std::vector<std::pair<GradNode<S>*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            GradNode<S>* p = node->parents[next++].get();
            if (p && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

// Reverse sweep from a scalar loss. Interior gradients are cleared first so
// repeated backward() calls over one graph do not double-count; leaf grads
// accumulate by design.
template <typename S>
inline void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.node()) throw std::invalid_argument("backward: loss is not tracked");
    auto order = detail::topo_order(loss.node().get());
    for (auto* n : order)
        if (!n->leaf) n->grad = Tensor<S>();
    accumulate_grad(loss.node(), Tensor<S>::ones(loss.shape()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        GradNode<S>* n = *it;
        if (n->backprop && n->grad.defined()) n->backprop(n->grad);
    }
}

}  // namespace abi::num
