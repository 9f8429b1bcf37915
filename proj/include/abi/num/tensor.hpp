#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace abi::num {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

// Trailing-alignment broadcast: extents match from the right, extent 1 stretches.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    Shape out(std::max(a.size(), b.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::int64_t ea = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
        std::int64_t eb = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
        out[i] = std::max(ea, eb);
    }
    return out;
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

template <typename S>
struct GradNode;

// Dense row-major value with an optional handle into the autodiff graph.
// Copies share the underlying buffer; results of operations are treated as
// immutable. mutable_data() exists for parameter initialization and optimizer
// updates only.
template <typename S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<S>>(static_cast<std::size_t>(shape_numel(shape_)), S(0))) {}

    Tensor(Shape shape, std::vector<S> values) : shape_(std::move(shape)) {
        if (shape_numel(shape_) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                        " values for shape " + shape_str(shape_));
        data_ = std::make_shared<std::vector<S>>(std::move(values));
    }

    Tensor(Shape shape, std::shared_ptr<std::vector<S>> buffer) : shape_(std::move(shape)), data_(std::move(buffer)) {
        if (!data_ || shape_numel(shape_) != static_cast<std::int64_t>(data_->size()))
            throw std::invalid_argument("tensor: buffer size does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

    static Tensor scalar(S v) { return Tensor({}, std::vector<S>{v}); }

    static Tensor from_values(std::vector<S> values) {
        Shape s{static_cast<std::int64_t>(values.size())};
        return Tensor(std::move(s), std::move(values));
    }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t dim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t extent(std::int64_t axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

    std::span<const S> data() const { return {data_->data(), data_->size()}; }
    std::span<S> mutable_data() { return {data_->data(), data_->size()}; }
    const std::shared_ptr<std::vector<S>>& buffer() const { return data_; }

    S at(std::int64_t flat) const { return (*data_)[static_cast<std::size_t>(flat)]; }

    S value() const {
        if (numel() != 1) throw std::invalid_argument("value: tensor " + shape_str(shape_) + " is not a scalar");
        return (*data_)[0];
    }

    bool all_finite() const {
        for (S v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // --- autodiff handle ---
    bool tracked() const { return node_ != nullptr; }
    const std::shared_ptr<GradNode<S>>& node() const { return node_; }
    void set_node(std::shared_ptr<GradNode<S>> n) { node_ = std::move(n); }

    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<S>>(*data_);
        return t;
    }

    // Same buffer under a new shape; drops the autodiff handle (graph-aware
    // reshape lives in ops.hpp).
    Tensor reshaped_view(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw std::invalid_argument("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<S>> data_;
    std::shared_ptr<GradNode<S>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace abi::num
