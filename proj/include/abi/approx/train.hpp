#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "abi/num/rng.hpp"
#include "abi/sim/named_batch.hpp"

namespace abi::approx {

struct TrainConfig {
    std::int64_t epochs = 10;
    std::int64_t batch_size = 32;
    std::int64_t num_batches_per_epoch = 200;  // online fitting only
    double learning_rate = 1e-4;
    double learning_rate_floor = 1e-6;
    std::optional<sim::NamedBatch> validation;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (num_batches_per_epoch < 1)
            throw std::invalid_argument("train config: num_batches_per_epoch must be >= 1");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    }
};

// Per-epoch mean losses. validation stays empty unless a validation batch
// was supplied; when present it is aligned with train.
struct History {
    std::vector<double> train;
    std::vector<double> validation;
};

// Rows gathered from every batch-shaped entry; meta entries, meta flags and
// semantics tags carry over unchanged.
inline sim::NamedBatch gather_batch_rows(const sim::NamedBatch& batch, const std::vector<std::int64_t>& rows) {
    sim::NamedBatch out(static_cast<std::int64_t>(rows.size()));
    for (const auto& [name, value] : batch.items()) {
        if (batch.is_meta(name))
            out.set(name, value, true);
        else
            out.set(name, num::gather_rows(value, rows));
        out.set_semantics(name, batch.semantics_of(name));
    }
    return out;
}

// Fixed pool of simulations for epoch-based training. Each epoch visits
// every row exactly once in an order drawn deterministically from
// (seed, epoch).
class OfflineDataset {
public:
    explicit OfflineDataset(sim::NamedBatch data) : data_(std::move(data)) {
        if (data_.batch_size() < 1) throw std::invalid_argument("offline dataset: empty dataset");
    }

    std::int64_t size() const { return data_.batch_size(); }
    const sim::NamedBatch& data() const { return data_; }

    std::vector<std::int64_t> epoch_order(std::uint64_t seed, std::int64_t epoch) const {
        num::RngStream stream(seed, static_cast<std::uint64_t>(epoch));
        return num::rand_permutation(stream, size());
    }

    sim::NamedBatch rows(const std::vector<std::int64_t>& idx) const { return gather_batch_rows(data_, idx); }

private:
    sim::NamedBatch data_;
};

}  // namespace abi::approx
