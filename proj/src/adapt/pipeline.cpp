#include "abi/adapt/pipeline.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

namespace abi::adapt {

using json = nlohmann::json;
using num::Array;
using num::DType;
using sim::NamedBatch;
using sim::Semantics;

bool Transform::invertible() const {
    switch (kind) {
        case Kind::convert_dtype:
        case Kind::drop:
        case Kind::keep:
        case Kind::broadcast:
            return false;
        default:
            return true;
    }
}

const char* Transform::kind_name(Kind k) {
    switch (k) {
        case Kind::convert_dtype: return "convert_dtype";
        case Kind::drop: return "drop";
        case Kind::keep: return "keep";
        case Kind::rename: return "rename";
        case Kind::broadcast: return "broadcast";
        case Kind::sqrt_value: return "sqrt";
        case Kind::log_value: return "log";
        case Kind::constrain_lower: return "constrain_lower";
        case Kind::standardize: return "standardize";
        case Kind::as_set: return "as_set";
        case Kind::as_time_series: return "as_time_series";
        case Kind::concatenate: return "concatenate";
    }
    return "?";
}

namespace {

[[noreturn]] void fail(std::size_t idx, const Transform& t, const std::string& msg) {
    throw std::invalid_argument("transform " + std::to_string(idx) + " (" +
                                std::string(Transform::kind_name(t.kind)) + "): " + msg);
}

Array map_values(const Array& a, const std::function<double(double)>& f) {
    Array out = Array::zeros(a.dtype(), a.shape());
    if (a.dtype() == DType::f32) {
        auto src = a.view<float>();
        auto dst = out.mutable_view<float>();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(f(static_cast<double>(src[i])));
    } else {
        auto src = a.view<double>();
        auto dst = out.mutable_view<double>();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    }
    return out;
}

double softplus(double x) {
    if (x > 30) return x;
    if (x < -30) return std::exp(x);
    return std::log1p(std::exp(x));
}

// softplus inverse, stable on both tails; u must be positive.
double softplus_inverse(double u) { return u + std::log1p(-std::exp(-u)); }

using LogDet = std::map<std::string, std::vector<double>>;

std::vector<double>& acc_for(LogDet& ld, const std::string& name, std::int64_t batch) {
    auto it = ld.find(name);
    if (it == ld.end()) it = ld.emplace(name, std::vector<double>(static_cast<std::size_t>(batch), 0.0)).first;
    return it->second;
}

// Adds per-row sums of f(value) over the trailing axes of a (B, ...) entry.
void add_logdet(LogDet* ld, const NamedBatch& b, const std::string& name, const Array& a,
                const std::function<double(double)>& f) {
    if (!ld || b.is_meta(name) || a.dim() < 1 || a.extent(0) != b.batch_size()) return;
    auto& acc = acc_for(*ld, name, b.batch_size());
    const std::int64_t rowlen = a.numel() / a.extent(0);
    for (std::int64_t r = 0; r < a.extent(0); ++r) {
        double s = 0;
        for (std::int64_t j = 0; j < rowlen; ++j) s += f(a.item(r * rowlen + j));
        acc[static_cast<std::size_t>(r)] += s;
    }
}

}  // namespace

TransformPipeline& TransformPipeline::convert_dtype(DType from, DType to) {
    Transform t;
    t.kind = Transform::Kind::convert_dtype;
    t.from_dtype = from;
    t.to_dtype = to;
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::drop(std::vector<std::string> names) {
    Transform t;
    t.kind = Transform::Kind::drop;
    t.names = std::move(names);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::keep(std::vector<std::string> names) {
    Transform t;
    t.kind = Transform::Kind::keep;
    t.names = std::move(names);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::rename(const std::string& from, const std::string& to) {
    Transform t;
    t.kind = Transform::Kind::rename;
    t.names = {from};
    t.target = to;
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::broadcast(const std::string& name, const std::string& to) {
    Transform t;
    t.kind = Transform::Kind::broadcast;
    t.names = {name};
    t.target = to;
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::sqrt(std::vector<std::string> names) {
    Transform t;
    t.kind = Transform::Kind::sqrt_value;
    t.names = std::move(names);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::log(std::vector<std::string> names) {
    Transform t;
    t.kind = Transform::Kind::log_value;
    t.names = std::move(names);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::constrain_lower(std::vector<std::string> names, double lower) {
    Transform t;
    t.kind = Transform::Kind::constrain_lower;
    t.names = std::move(names);
    t.lower = lower;
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::standardize(const std::string& name, std::vector<double> means,
                                                  std::vector<double> sds) {
    if (means.empty() || sds.empty()) throw std::invalid_argument("standardize: means and sds must be non-empty");
    for (double s : sds)
        if (!(s > 0)) throw std::invalid_argument("standardize: sds must be strictly positive");
    Transform t;
    t.kind = Transform::Kind::standardize;
    t.names = {name};
    t.means = std::move(means);
    t.sds = std::move(sds);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::as_set(std::vector<std::string> names) {
    Transform t;
    t.kind = Transform::Kind::as_set;
    t.names = std::move(names);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::as_time_series(std::vector<std::string> names) {
    Transform t;
    t.kind = Transform::Kind::as_time_series;
    t.names = std::move(names);
    transforms_.push_back(std::move(t));
    return *this;
}

TransformPipeline& TransformPipeline::concatenate(std::vector<std::string> names, const std::string& into) {
    if (names.empty()) throw std::invalid_argument("concatenate: no source names");
    Transform t;
    t.kind = Transform::Kind::concatenate;
    t.names = std::move(names);
    t.target = into;
    transforms_.push_back(std::move(t));
    return *this;
}

bool TransformPipeline::produces(const std::string& name) const {
    for (const auto& t : transforms_) {
        if (t.kind == Transform::Kind::concatenate && t.target == name) return true;
        if (t.kind == Transform::Kind::rename && t.target == name) return true;
    }
    return false;
}

namespace {

struct ApplyContext {
    MissingPolicy missing;
    LogDet* log_det;
};

// Returns false when, under the skip policy, the operand is absent.
bool need(std::size_t idx, const Transform& t, const NamedBatch& b, const std::string& name, MissingPolicy missing) {
    if (b.contains(name)) return true;
    if (missing == MissingPolicy::skip) return false;
    fail(idx, t, "missing entry '" + name + "'");
}

void elementwise_forward(std::size_t idx, const Transform& t, NamedBatch& b, ApplyContext& ctx,
                         const std::function<double(double)>& fwd, const std::function<double(double)>& ld,
                         const std::function<void(double)>& check) {
    for (const auto& name : t.names) {
        if (!need(idx, t, b, name, ctx.missing)) continue;
        const Array& a = b.at(name);
        if (check) {
            for (std::int64_t i = 0; i < a.numel(); ++i) check(a.item(i));
        }
        if (ld) add_logdet(ctx.log_det, b, name, a, ld);
        b.set(name, map_values(a, fwd), b.is_meta(name));
    }
}

void elementwise_inverse(std::size_t idx, const Transform& t, NamedBatch& b, ApplyContext& ctx,
                         const std::function<double(double)>& inv) {
    for (const auto& name : t.names) {
        if (!need(idx, t, b, name, ctx.missing)) continue;
        b.set(name, map_values(b.at(name), inv), b.is_meta(name));
    }
}

}  // namespace

struct PipelineAccess {
    static void apply_one(const TransformPipeline& p, std::size_t idx, NamedBatch& b, Direction dir,
                          ApplyContext& ctx) {
        const Transform& t = p.transforms_[idx];
        const bool fwd = dir == Direction::forward;
        if (!fwd && !t.invertible()) return;

        switch (t.kind) {
            case Transform::Kind::convert_dtype: {
                std::vector<std::string> names = b.names();
                for (const auto& name : names) {
                    const Array& a = b.at(name);
                    if (a.dtype() == t.from_dtype) b.set(name, a.astype(t.to_dtype), b.is_meta(name));
                }
                break;
            }
            case Transform::Kind::drop: {
                for (const auto& name : t.names) {
                    if (!need(idx, t, b, name, ctx.missing)) continue;
                    b.erase(name);
                    if (ctx.log_det) ctx.log_det->erase(name);
                }
                break;
            }
            case Transform::Kind::keep: {
                for (const auto& name : t.names) need(idx, t, b, name, ctx.missing);
                std::set<std::string> kept(t.names.begin(), t.names.end());
                for (const auto& name : b.names())
                    if (!kept.count(name)) {
                        b.erase(name);
                        if (ctx.log_det) ctx.log_det->erase(name);
                    }
                break;
            }
            case Transform::Kind::rename: {
                const std::string& from = fwd ? t.names[0] : t.target;
                const std::string& to = fwd ? t.target : t.names[0];
                if (!need(idx, t, b, from, ctx.missing)) break;
                if (b.contains(to)) fail(idx, t, "target '" + to + "' already exists");
                b.rename(from, to);
                if (ctx.log_det) {
                    auto it = ctx.log_det->find(from);
                    if (it != ctx.log_det->end()) {
                        (*ctx.log_det)[to] = std::move(it->second);
                        ctx.log_det->erase(from);
                    }
                }
                break;
            }
            case Transform::Kind::broadcast: {
                if (!need(idx, t, b, t.names[0], ctx.missing)) break;
                if (!need(idx, t, b, t.target, ctx.missing)) break;
                const Array& src = b.at(t.names[0]);
                const std::int64_t batch = b.batch_size();
                if (!b.is_meta(t.names[0])) {
                    if (src.dim() >= 1 && src.extent(0) == batch) break;  // already batch-shaped
                    fail(idx, t, "entry '" + t.names[0] + "' is neither meta nor batch-shaped");
                }
                const std::int64_t width = std::max<std::int64_t>(src.numel(), 1);
                Array out = Array::zeros(src.dtype(), {batch, width});
                const auto vals = src.to_doubles();
                out.visit_mut([&](auto span) {
                    using S = typename decltype(span)::value_type;
                    for (std::int64_t r = 0; r < batch; ++r)
                        for (std::int64_t j = 0; j < width; ++j)
                            span[static_cast<std::size_t>(r * width + j)] = static_cast<S>(vals[static_cast<std::size_t>(j)]);
                });
                b.erase(t.names[0]);
                b.set(t.names[0], std::move(out));
                break;
            }
            case Transform::Kind::sqrt_value: {
                if (fwd)
                    elementwise_forward(
                        idx, t, b, ctx, [](double x) { return std::sqrt(x); },
                        [](double x) { return -std::log(2.0 * std::sqrt(x)); },
                        [&](double x) {
                            if (!(x > 0)) fail(idx, t, "non-positive value");
                        });
                else
                    elementwise_inverse(idx, t, b, ctx, [](double z) { return z * z; });
                break;
            }
            case Transform::Kind::log_value: {
                if (fwd)
                    elementwise_forward(
                        idx, t, b, ctx, [](double x) { return std::log(x); },
                        [](double x) { return -std::log(x); },
                        [&](double x) {
                            if (!(x > 0)) fail(idx, t, "non-positive value");
                        });
                else
                    elementwise_inverse(idx, t, b, ctx, [](double z) { return std::exp(z); });
                break;
            }
            case Transform::Kind::constrain_lower: {
                const double lower = t.lower;
                if (fwd)
                    elementwise_forward(
                        idx, t, b, ctx, [lower](double x) { return softplus_inverse(x - lower); },
                        [lower](double x) { return softplus(-softplus_inverse(x - lower)); },
                        [&](double x) {
                            if (!(x > lower)) fail(idx, t, "value <= lower bound");
                        });
                else
                    elementwise_inverse(idx, t, b, ctx, [lower](double z) { return lower + softplus(z); });
                break;
            }
            case Transform::Kind::standardize: {
                const std::string& name = t.names[0];
                if (!need(idx, t, b, name, ctx.missing)) break;
                const Array& a = b.at(name);
                const std::int64_t width = a.dim() >= 1 ? a.shape().back() : 1;
                if (static_cast<std::int64_t>(t.means.size()) != width && t.means.size() != 1)
                    fail(idx, t, "means length does not match trailing extent");
                if (static_cast<std::int64_t>(t.sds.size()) != width && t.sds.size() != 1)
                    fail(idx, t, "sds length does not match trailing extent");
                auto mean_at = [&](std::int64_t j) { return t.means[t.means.size() == 1 ? 0 : static_cast<std::size_t>(j)]; };
                auto sd_at = [&](std::int64_t j) { return t.sds[t.sds.size() == 1 ? 0 : static_cast<std::size_t>(j)]; };
                Array out = Array::zeros(a.dtype(), a.shape());
                const std::int64_t n = a.numel();
                out.visit_mut([&](auto span) {
                    using S = typename decltype(span)::value_type;
                    for (std::int64_t i = 0; i < n; ++i) {
                        const std::int64_t j = i % width;
                        const double v = fwd ? (a.item(i) - mean_at(j)) / sd_at(j) : a.item(i) * sd_at(j) + mean_at(j);
                        span[static_cast<std::size_t>(i)] = static_cast<S>(v);
                    }
                });
                b.set(name, std::move(out), b.is_meta(name));
                if (fwd && ctx.log_det && !b.is_meta(name) && a.dim() >= 1 && a.extent(0) == b.batch_size()) {
                    auto& acc = acc_for(*ctx.log_det, name, b.batch_size());
                    const std::int64_t rowlen = a.numel() / a.extent(0);
                    double per_row = 0;
                    for (std::int64_t j = 0; j < rowlen; ++j) per_row += -std::log(sd_at(j % width));
                    for (auto& v : acc) v += per_row;
                }
                break;
            }
            case Transform::Kind::as_set:
            case Transform::Kind::as_time_series: {
                const Semantics tag =
                    t.kind == Transform::Kind::as_set ? Semantics::set : Semantics::time_series;
                for (const auto& name : t.names) {
                    if (!need(idx, t, b, name, ctx.missing)) continue;
                    const Array& a = b.at(name);
                    if (fwd) {
                        if (b.semantics_of(name) != Semantics::none) fail(idx, t, "'" + name + "' already tagged");
                        num::Shape s = a.shape();
                        s.push_back(1);
                        b.set(name, a.reshaped(s), b.is_meta(name));
                        b.set_semantics(name, tag);
                    } else {
                        if (a.dim() < 1 || a.shape().back() != 1)
                            fail(idx, t, "'" + name + "' has no trailing unit axis to remove");
                        num::Shape s = a.shape();
                        s.pop_back();
                        b.set(name, a.reshaped(s), b.is_meta(name));
                        b.set_semantics(name, Semantics::none);
                    }
                }
                break;
            }
            case Transform::Kind::concatenate: {
                if (fwd)
                    concat_forward(p, idx, t, b, ctx);
                else
                    concat_inverse(p, idx, t, b, ctx);
                break;
            }
        }
    }

    static void concat_forward(const TransformPipeline& p, std::size_t idx, const Transform& t, NamedBatch& b,
                               ApplyContext& ctx) {
        std::size_t present = 0;
        for (const auto& name : t.names)
            if (b.contains(name)) ++present;
        if (present == 0 && ctx.missing == MissingPolicy::skip) return;
        if (present != t.names.size()) {
            for (const auto& name : t.names)
                if (!b.contains(name)) fail(idx, t, "missing entry '" + name + "'");
        }
        const Array& first = b.at(t.names[0]);
        const bool meta_out = b.is_meta(t.names[0]);
        if (first.dim() < 1 || (!meta_out && first.dim() < 2))
            fail(idx, t, "sources need a feature axis distinct from the batch axis");
        num::Shape lead(first.shape().begin(), first.shape().end() - 1);
        std::vector<std::int64_t> extents;
        std::int64_t total = 0;
        for (const auto& name : t.names) {
            const Array& a = b.at(name);
            if (a.dim() != first.dim()) fail(idx, t, "rank mismatch for '" + name + "'");
            if (a.dtype() != first.dtype()) fail(idx, t, "dtype mismatch for '" + name + "'");
            num::Shape alead(a.shape().begin(), a.shape().end() - 1);
            if (alead != lead) fail(idx, t, "shape mismatch for '" + name + "'");
            extents.push_back(a.shape().back());
            total += a.shape().back();
        }

        {
            std::lock_guard<std::mutex> lock(p.state_->mutex);
            auto it = p.state_->extents.find(idx);
            if (it == p.state_->extents.end()) {
                if (!t.split_extents.empty() && t.split_extents != extents)
                    fail(idx, t, "extents differ from recorded split table");
                p.state_->extents[idx] = extents;
            } else if (it->second != extents) {
                fail(idx, t, "extents differ from recorded split table");
            }
        }

        num::Shape out_shape = lead;
        out_shape.push_back(total);
        Array out = Array::zeros(first.dtype(), out_shape);
        const std::int64_t outer = num::shape_numel(lead);
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < t.names.size(); ++k) {
            const Array& a = b.at(t.names[k]);
            const std::int64_t w = extents[k];
            out.visit_mut([&](auto span) {
                using S = typename decltype(span)::value_type;
                for (std::int64_t o = 0; o < outer; ++o)
                    for (std::int64_t j = 0; j < w; ++j)
                        span[static_cast<std::size_t>(o * total + offset + j)] = static_cast<S>(a.item(o * w + j));
            });
            offset += w;
        }

        // semantics carry over only when all sources agree
        Semantics tag = b.semantics_of(t.names[0]);
        for (const auto& name : t.names)
            if (b.semantics_of(name) != tag) tag = Semantics::none;

        if (ctx.log_det) {
            std::vector<double> merged(static_cast<std::size_t>(b.batch_size()), 0.0);
            bool any = false;
            for (const auto& name : t.names) {
                auto it = ctx.log_det->find(name);
                if (it != ctx.log_det->end()) {
                    any = true;
                    for (std::size_t r = 0; r < merged.size(); ++r) merged[r] += it->second[r];
                    ctx.log_det->erase(it);
                }
            }
            if (any) (*ctx.log_det)[t.target] = std::move(merged);
        }

        for (const auto& name : t.names) b.erase(name);
        if (b.contains(t.target)) fail(idx, t, "target '" + t.target + "' already exists");
        b.set(t.target, std::move(out), meta_out);
        if (tag != Semantics::none) b.set_semantics(t.target, tag);
    }

    static void concat_inverse(const TransformPipeline& p, std::size_t idx, const Transform& t, NamedBatch& b,
                               ApplyContext& ctx) {
        if (!need(idx, t, b, t.target, ctx.missing)) return;
        std::vector<std::int64_t> extents = t.split_extents;
        {
            std::lock_guard<std::mutex> lock(p.state_->mutex);
            auto it = p.state_->extents.find(idx);
            if (it != p.state_->extents.end()) extents = it->second;
        }
        if (extents.empty())
            fail(idx, t, "split extents unknown (no forward pass recorded and none serialized)");
        const Array& a = b.at(t.target);
        std::int64_t total = 0;
        for (auto e : extents) total += e;
        if (a.dim() < 1 || a.shape().back() != total)
            fail(idx, t, "trailing extent " + std::to_string(a.dim() >= 1 ? a.shape().back() : -1) +
                             " does not match split table total " + std::to_string(total));
        num::Shape lead(a.shape().begin(), a.shape().end() - 1);
        const std::int64_t outer = num::shape_numel(lead);
        std::int64_t offset = 0;
        std::vector<std::pair<std::string, Array>> parts;
        for (std::size_t k = 0; k < t.names.size(); ++k) {
            const std::int64_t w = extents[k];
            num::Shape ps = lead;
            ps.push_back(w);
            Array part = Array::zeros(a.dtype(), ps);
            part.visit_mut([&](auto span) {
                using S = typename decltype(span)::value_type;
                for (std::int64_t o = 0; o < outer; ++o)
                    for (std::int64_t j = 0; j < w; ++j)
                        span[static_cast<std::size_t>(o * w + j)] = static_cast<S>(a.item(o * total + offset + j));
            });
            parts.emplace_back(t.names[k], std::move(part));
            offset += w;
        }
        b.erase(t.target);
        for (auto& [name, part] : parts) {
            if (b.contains(name)) fail(idx, t, "split target '" + name + "' already exists");
            b.set(name, std::move(part));
        }
    }

    static std::map<std::size_t, std::vector<std::int64_t>> recorded_splits(const TransformPipeline& p) {
        std::lock_guard<std::mutex> lock(p.state_->mutex);
        return p.state_->extents;
    }
};

sim::NamedBatch TransformPipeline::apply(const sim::NamedBatch& batch, Direction direction,
                                         MissingPolicy missing) const {
    NamedBatch b = batch;
    ApplyContext ctx{missing, nullptr};
    if (direction == Direction::forward) {
        for (std::size_t i = 0; i < transforms_.size(); ++i) PipelineAccess::apply_one(*this, i, b, direction, ctx);
    } else {
        for (std::size_t i = transforms_.size(); i-- > 0;) PipelineAccess::apply_one(*this, i, b, direction, ctx);
    }
    return b;
}

AdaptResult TransformPipeline::apply_forward_logdet(const sim::NamedBatch& batch, MissingPolicy missing) const {
    AdaptResult result;
    result.batch = batch;
    ApplyContext ctx{missing, &result.log_det};
    for (std::size_t i = 0; i < transforms_.size(); ++i)
        PipelineAccess::apply_one(*this, i, result.batch, Direction::forward, ctx);
    return result;
}

namespace {

const char* dtype_token(DType d) { return d == DType::f32 ? "float32" : "float64"; }

DType parse_dtype(const json& j, const std::string& path) {
    const std::string s = j.get<std::string>();
    if (s == "float32") return DType::f32;
    if (s == "float64") return DType::f64;
    throw std::invalid_argument(path + ": unknown dtype '" + s + "'");
}

void check_keys(const json& o, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = o.begin(); it != o.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument(path + ": unknown key '" + it.key() + "'");
}

}  // namespace

std::string pipeline_to_json(const TransformPipeline& p) {
    const auto splits = PipelineAccess::recorded_splits(p);
    json arr = json::array();
    for (std::size_t i = 0; i < p.transforms().size(); ++i) {
        const auto& t = p.transforms()[i];
        json o;
        o["kind"] = Transform::kind_name(t.kind);
        switch (t.kind) {
            case Transform::Kind::convert_dtype:
                o["from"] = dtype_token(t.from_dtype);
                o["to"] = dtype_token(t.to_dtype);
                break;
            case Transform::Kind::drop:
            case Transform::Kind::keep:
            case Transform::Kind::sqrt_value:
            case Transform::Kind::log_value:
            case Transform::Kind::as_set:
            case Transform::Kind::as_time_series:
                o["names"] = t.names;
                break;
            case Transform::Kind::rename:
                o["from"] = t.names[0];
                o["to"] = t.target;
                break;
            case Transform::Kind::broadcast:
                o["name"] = t.names[0];
                o["to"] = t.target;
                break;
            case Transform::Kind::constrain_lower:
                o["names"] = t.names;
                o["lower"] = t.lower;
                break;
            case Transform::Kind::standardize:
                o["name"] = t.names[0];
                o["means"] = t.means;
                o["sds"] = t.sds;
                break;
            case Transform::Kind::concatenate: {
                o["names"] = t.names;
                o["into"] = t.target;
                auto it = splits.find(i);
                if (it != splits.end())
                    o["split"] = it->second;
                else if (!t.split_extents.empty())
                    o["split"] = t.split_extents;
                break;
            }
        }
        arr.push_back(std::move(o));
    }
    return arr.dump();
}

TransformPipeline pipeline_from_json(const std::string& text) {
    json arr = json::parse(text);
    if (!arr.is_array()) throw std::invalid_argument("adapter: expected a JSON array of transforms");
    std::vector<Transform> transforms;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const json& o = arr[i];
        const std::string path = "adapter[" + std::to_string(i) + "]";
        if (!o.is_object() || !o.contains("kind"))
            throw std::invalid_argument(path + ": expected an object with a 'kind'");
        const std::string kind = o.at("kind").get<std::string>();
        Transform t;
        if (kind == "convert_dtype") {
            check_keys(o, {"kind", "from", "to"}, path);
            t.kind = Transform::Kind::convert_dtype;
            t.from_dtype = parse_dtype(o.at("from"), path);
            t.to_dtype = parse_dtype(o.at("to"), path);
        } else if (kind == "drop" || kind == "keep" || kind == "sqrt" || kind == "log" || kind == "as_set" ||
                   kind == "as_time_series") {
            check_keys(o, {"kind", "names"}, path);
            t.kind = kind == "drop"            ? Transform::Kind::drop
                     : kind == "keep"          ? Transform::Kind::keep
                     : kind == "sqrt"          ? Transform::Kind::sqrt_value
                     : kind == "log"           ? Transform::Kind::log_value
                     : kind == "as_set"        ? Transform::Kind::as_set
                                               : Transform::Kind::as_time_series;
            t.names = o.at("names").get<std::vector<std::string>>();
        } else if (kind == "rename") {
            check_keys(o, {"kind", "from", "to"}, path);
            t.kind = Transform::Kind::rename;
            t.names = {o.at("from").get<std::string>()};
            t.target = o.at("to").get<std::string>();
        } else if (kind == "broadcast") {
            check_keys(o, {"kind", "name", "to"}, path);
            t.kind = Transform::Kind::broadcast;
            t.names = {o.at("name").get<std::string>()};
            t.target = o.at("to").get<std::string>();
        } else if (kind == "constrain_lower") {
            check_keys(o, {"kind", "names", "lower"}, path);
            t.kind = Transform::Kind::constrain_lower;
            t.names = o.at("names").get<std::vector<std::string>>();
            t.lower = o.at("lower").get<double>();
        } else if (kind == "standardize") {
            check_keys(o, {"kind", "name", "means", "sds"}, path);
            t.kind = Transform::Kind::standardize;
            t.names = {o.at("name").get<std::string>()};
            t.means = o.at("means").get<std::vector<double>>();
            t.sds = o.at("sds").get<std::vector<double>>();
            for (double s : t.sds)
                if (!(s > 0)) throw std::invalid_argument(path + ": sds must be strictly positive");
        } else if (kind == "concatenate") {
            check_keys(o, {"kind", "names", "into", "split"}, path);
            t.kind = Transform::Kind::concatenate;
            t.names = o.at("names").get<std::vector<std::string>>();
            t.target = o.at("into").get<std::string>();
            if (o.contains("split")) t.split_extents = o.at("split").get<std::vector<std::int64_t>>();
            if (t.names.empty()) throw std::invalid_argument(path + ": no source names");
        } else {
            throw std::invalid_argument(path + ": unknown transform kind '" + kind + "'");
        }
        transforms.push_back(std::move(t));
    }
    return TransformPipeline(std::move(transforms));
}

}  // namespace abi::adapt
