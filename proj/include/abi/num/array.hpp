#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <variant>

#include "abi/num/tensor.hpp"

namespace abi::num {

enum class DType { f32, f64 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "float32" : "float64"; }
inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

// Runtime-dtyped dense array. Shares buffers with Tensor<float> /
// Tensor<double> in both directions without copying; buffers are treated as
// immutable once an Array wraps them.
class Array {
public:
    Array() = default;

    static Array zeros(DType dt, Shape shape) {
        Array a;
        a.shape_ = std::move(shape);
        std::size_t n = static_cast<std::size_t>(shape_numel(a.shape_));
        if (dt == DType::f32)
            a.data_ = std::make_shared<std::vector<float>>(n, 0.0f);
        else
            a.data_ = std::make_shared<std::vector<double>>(n, 0.0);
        return a;
    }

    static Array full(DType dt, Shape shape, double v) {
        Array a = zeros(dt, std::move(shape));
        a.visit_mut([&](auto s) {
            for (auto& x : s) x = static_cast<typename decltype(s)::value_type>(v);
        });
        return a;
    }

    static Array scalar(double v, DType dt = DType::f64) { return full(dt, {}, v); }

    static Array from_values(Shape shape, std::vector<double> values) {
        if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("array: " + std::to_string(values.size()) + " values for shape " +
                                        shape_str(shape));
        Array a;
        a.shape_ = std::move(shape);
        a.data_ = std::make_shared<std::vector<double>>(std::move(values));
        return a;
    }

    static Array from_values_f32(Shape shape, std::vector<float> values) {
        if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("array: " + std::to_string(values.size()) + " values for shape " +
                                        shape_str(shape));
        Array a;
        a.shape_ = std::move(shape);
        a.data_ = std::make_shared<std::vector<float>>(std::move(values));
        return a;
    }

    template <typename S>
    static Array from_tensor(const Tensor<S>& t) {
        static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
        Array a;
        a.shape_ = t.shape();
        a.data_ = t.buffer();
        return a;
    }

    bool defined() const { return !std::holds_alternative<std::monostate>(data_); }
    const Shape& shape() const { return shape_; }
    std::int64_t dim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t extent(std::int64_t axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::int64_t numel() const { return shape_numel(shape_); }

    DType dtype() const {
        if (std::holds_alternative<std::shared_ptr<std::vector<float>>>(data_)) return DType::f32;
        if (std::holds_alternative<std::shared_ptr<std::vector<double>>>(data_)) return DType::f64;
        throw std::runtime_error("array: undefined");
    }

    template <typename S>
    std::span<const S> view() const {
        auto* p = std::get_if<std::shared_ptr<std::vector<S>>>(&data_);
        if (!p) throw std::invalid_argument(std::string("array: not ") + (sizeof(S) == 4 ? "float32" : "float64"));
        return {(*p)->data(), (*p)->size()};
    }

    // f receives a std::span<const S>.
    template <typename F>
    auto visit(F f) const {
        if (dtype() == DType::f32) return f(view<float>());
        return f(view<double>());
    }

    template <typename S>
    Tensor<S> to_tensor() const {
        return Tensor<S>(shape_, std::get<std::shared_ptr<std::vector<S>>>(data_));
    }

    double item(std::int64_t flat) const {
        return visit([&](auto s) { return static_cast<double>(s[static_cast<std::size_t>(flat)]); });
    }

    std::vector<double> to_doubles() const {
        std::vector<double> out(static_cast<std::size_t>(numel()));
        visit([&](auto s) {
            for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<double>(s[i]);
        });
        return out;
    }

    // f64 -> f32 rounds to nearest; f32 -> f64 is exact. Same dtype shares.
    Array astype(DType dt) const {
        if (dt == dtype()) return *this;
        Array out = zeros(dt, shape_);
        auto src = to_doubles();
        out.visit_mut([&](auto s) {
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<typename decltype(s)::value_type>(src[i]);
        });
        return out;
    }

    Array reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw std::invalid_argument("array reshape: " + shape_str(shape_) + " to " + shape_str(shape));
        Array a = *this;
        a.shape_ = std::move(shape);
        return a;
    }

    Array clone() const {
        Array a;
        a.shape_ = shape_;
        if (dtype() == DType::f32)
            a.data_ = std::make_shared<std::vector<float>>(*std::get<std::shared_ptr<std::vector<float>>>(data_));
        else
            a.data_ = std::make_shared<std::vector<double>>(*std::get<std::shared_ptr<std::vector<double>>>(data_));
        return a;
    }

    // Mutation is reserved for freshly-created arrays during assembly.
    template <typename F>
    void visit_mut(F f) {
        if (dtype() == DType::f32) {
            auto& v = *std::get<std::shared_ptr<std::vector<float>>>(data_);
            f(std::span<float>(v.data(), v.size()));
        } else {
            auto& v = *std::get<std::shared_ptr<std::vector<double>>>(data_);
            f(std::span<double>(v.data(), v.size()));
        }
    }

    template <typename S>
    std::span<S> mutable_view() {
        auto* p = std::get_if<std::shared_ptr<std::vector<S>>>(&data_);
        if (!p) throw std::invalid_argument("array: dtype mismatch");
        return {(*p)->data(), (*p)->size()};
    }

    const void* raw_data() const {
        return visit([](auto s) { return static_cast<const void*>(s.data()); });
    }
    std::size_t byte_size() const { return static_cast<std::size_t>(numel()) * dtype_size(dtype()); }

private:
    Shape shape_;
    std::variant<std::monostate, std::shared_ptr<std::vector<float>>, std::shared_ptr<std::vector<double>>> data_;
};

// Rows gathered from axis 0 in index order.
inline Array gather_rows(const Array& a, const std::vector<std::int64_t>& idx) {
    if (a.dim() < 1) throw std::invalid_argument("gather_rows: need at least 1 axis");
    std::int64_t rowlen = a.numel() / a.extent(0);
    Shape os = a.shape();
    os[0] = static_cast<std::int64_t>(idx.size());
    Array out = Array::zeros(a.dtype(), os);
    if (a.dtype() == DType::f32) {
        auto src = a.view<float>();
        auto dst = out.mutable_view<float>();
        for (std::size_t r = 0; r < idx.size(); ++r)
            std::copy_n(src.data() + idx[r] * rowlen, rowlen, dst.data() + static_cast<std::int64_t>(r) * rowlen);
    } else {
        auto src = a.view<double>();
        auto dst = out.mutable_view<double>();
        for (std::size_t r = 0; r < idx.size(); ++r)
            std::copy_n(src.data() + idx[r] * rowlen, rowlen, dst.data() + static_cast<std::int64_t>(r) * rowlen);
    }
    return out;
}

// Contiguous row range [start, start+len) along axis 0.
inline Array slice_rows(const Array& a, std::int64_t start, std::int64_t len) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(len));
    for (std::int64_t i = 0; i < len; ++i) idx[static_cast<std::size_t>(i)] = start + i;
    return gather_rows(a, idx);
}

// Stack along a new leading axis; all parts must share shape and dtype.
inline Array stack_rows(const std::vector<Array>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack_rows: no inputs");
    for (const auto& p : parts)
        if (p.shape() != parts[0].shape() || p.dtype() != parts[0].dtype())
            throw std::invalid_argument("stack_rows: mismatched parts");
    Shape os{static_cast<std::int64_t>(parts.size())};
    os.insert(os.end(), parts[0].shape().begin(), parts[0].shape().end());
    Array out = Array::zeros(parts[0].dtype(), os);
    std::int64_t rowlen = parts[0].numel();
    if (out.dtype() == DType::f32) {
        auto dst = out.mutable_view<float>();
        for (std::size_t r = 0; r < parts.size(); ++r) {
            auto src = parts[r].view<float>();
            std::copy_n(src.data(), rowlen, dst.data() + static_cast<std::int64_t>(r) * rowlen);
        }
    } else {
        auto dst = out.mutable_view<double>();
        for (std::size_t r = 0; r < parts.size(); ++r) {
            auto src = parts[r].view<double>();
            std::copy_n(src.data(), rowlen, dst.data() + static_cast<std::int64_t>(r) * rowlen);
        }
    }
    return out;
}

}  // namespace abi::num
