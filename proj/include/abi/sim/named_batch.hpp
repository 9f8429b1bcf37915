#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "abi/num/array.hpp"

namespace abi::sim {

// Ordered name -> array map for a single draw (no batch axis).
class NamedValues {
public:
    bool contains(const std::string& name) const { return find(name) != nullptr; }

    const num::Array* find(const std::string& name) const {
        for (const auto& [n, a] : items_)
            if (n == name) return &a;
        return nullptr;
    }

    const num::Array& at(const std::string& name) const {
        const num::Array* a = find(name);
        if (!a) throw std::invalid_argument("named values: no entry '" + name + "'");
        return *a;
    }

    void set(const std::string& name, num::Array value) {
        for (auto& [n, a] : items_)
            if (n == name) {
                a = std::move(value);
                return;
            }
        items_.emplace_back(name, std::move(value));
    }

    void set_scalar(const std::string& name, double v) { set(name, num::Array::scalar(v)); }

    const std::vector<std::pair<std::string, num::Array>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

private:
    std::vector<std::pair<std::string, num::Array>> items_;
};

enum class Semantics { none, set, time_series };

// Ordered name -> array map sharing a leading batch axis. Meta entries are
// per-batch constants stored in draw shape (no batch axis) and are exempt
// from the leading-extent invariant.
class NamedBatch {
public:
    NamedBatch() = default;
    explicit NamedBatch(std::int64_t batch_size) : batch_size_(batch_size) {}

    std::int64_t batch_size() const { return batch_size_; }

    bool contains(const std::string& name) const { return find(name) != nullptr; }

    const num::Array* find(const std::string& name) const {
        for (const auto& [n, a] : items_)
            if (n == name) return &a;
        return nullptr;
    }

    const num::Array& at(const std::string& name) const {
        const num::Array* a = find(name);
        if (!a) throw std::invalid_argument("batch: no entry '" + name + "'");
        return *a;
    }

    // Insert or replace in place, preserving insertion order.
    void set(const std::string& name, num::Array value, bool meta = false) {
        if (meta)
            meta_.insert(name);
        else if (!meta_.count(name)) {
            if (value.dim() < 1 || value.extent(0) != batch_size_)
                throw std::invalid_argument("batch: entry '" + name + "' has shape " + num::shape_str(value.shape()) +
                                            ", expected leading extent " + std::to_string(batch_size_));
        }
        for (auto& [n, a] : items_)
            if (n == name) {
                a = std::move(value);
                return;
            }
        items_.emplace_back(name, std::move(value));
    }

    void erase(const std::string& name) {
        for (auto it = items_.begin(); it != items_.end(); ++it)
            if (it->first == name) {
                items_.erase(it);
                meta_.erase(name);
                semantics_.erase(name);
                return;
            }
        throw std::invalid_argument("batch: no entry '" + name + "'");
    }

    void rename(const std::string& from, const std::string& to) {
        if (contains(to)) throw std::invalid_argument("batch: rename target '" + to + "' already exists");
        for (auto& [n, a] : items_)
            if (n == from) {
                n = to;
                if (meta_.erase(from)) meta_.insert(to);
                auto it = semantics_.find(from);
                if (it != semantics_.end()) {
                    semantics_[to] = it->second;
                    semantics_.erase(it);
                }
                return;
            }
        throw std::invalid_argument("batch: no entry '" + from + "'");
    }

    bool is_meta(const std::string& name) const { return meta_.count(name) > 0; }
    const std::set<std::string>& meta_names() const { return meta_; }

    Semantics semantics_of(const std::string& name) const {
        auto it = semantics_.find(name);
        return it == semantics_.end() ? Semantics::none : it->second;
    }
    void set_semantics(const std::string& name, Semantics s) {
        if (!contains(name)) throw std::invalid_argument("batch: no entry '" + name + "'");
        semantics_[name] = s;
    }

    const std::vector<std::pair<std::string, num::Array>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(items_.size());
        for (const auto& [n, a] : items_) out.push_back(n);
        return out;
    }

private:
    std::int64_t batch_size_ = 0;
    std::vector<std::pair<std::string, num::Array>> items_;
    std::set<std::string> meta_;
    std::map<std::string, Semantics> semantics_;
};

}  // namespace abi::sim
