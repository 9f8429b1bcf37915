#include "abi/sim/simulator.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <thread>

namespace abi::sim {

namespace {

// Per-row value stacked over the batch axis: () -> (B,1), (k,) -> (B,k),
// higher ranks gain a leading batch axis.
num::Array stack_draws(const std::string& name, const std::vector<const num::Array*>& rows) {
    const num::Array& first = *rows.front();
    num::Shape row_shape = first.shape();
    for (const auto* r : rows) {
        if (r->shape() != row_shape || r->dtype() != first.dtype())
            throw std::runtime_error("sample: rows of '" + name + "' disagree in shape or dtype (" +
                                     num::shape_str(row_shape) + " vs " + num::shape_str(r->shape()) + ")");
    }
    num::Shape out_shape{static_cast<std::int64_t>(rows.size())};
    if (row_shape.empty())
        out_shape.push_back(1);
    else
        out_shape.insert(out_shape.end(), row_shape.begin(), row_shape.end());
    num::Array out = num::Array::zeros(first.dtype(), out_shape);
    const std::int64_t rowlen = first.numel();
    if (first.dtype() == num::DType::f32) {
        auto dst = out.mutable_view<float>();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto src = rows[r]->view<float>();
            std::copy_n(src.data(), rowlen, dst.data() + static_cast<std::int64_t>(r) * rowlen);
        }
    } else {
        auto dst = out.mutable_view<double>();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto src = rows[r]->view<double>();
            std::copy_n(src.data(), rowlen, dst.data() + static_cast<std::int64_t>(r) * rowlen);
        }
    }
    return out;
}

num::Array row_of(const num::Array& batched, std::int64_t r) {
    num::Array row = num::slice_rows(batched, r, 1);
    num::Shape s(batched.shape().begin() + 1, batched.shape().end());
    return row.reshaped(s);
}

void check_outputs(const std::string& stage_name, const std::vector<std::string>& declared, const NamedValues& got) {
    for (const auto& name : declared)
        if (!got.contains(name))
            throw std::runtime_error("stage '" + stage_name + "' did not produce declared output '" + name + "'");
    if (got.size() != declared.size())
        throw std::runtime_error("stage '" + stage_name + "' produced undeclared outputs");
}

NamedBatch run_batch(const SimulatorSpec& sim, std::int64_t batch_size, num::RngStream& stream, int workers) {
    if (batch_size < 1) throw std::invalid_argument("sample: batch_size must be >= 1");
    if (workers < 1) throw std::invalid_argument("sample: workers must be >= 1");
    const std::uint64_t base = stream.next_u64();
    const std::uint64_t b = static_cast<std::uint64_t>(batch_size);
    NamedBatch batch(batch_size);

    if (sim.meta_stage()) {
        num::RngStream meta_rng(stream.seed(), base + b);
        NamedValues mv = sim.meta_stage()->run(meta_rng);
        check_outputs("<meta>", sim.meta_stage()->outputs, mv);
        for (const auto& name : sim.meta_stage()->outputs) batch.set(name, mv.at(name), /*meta=*/true);
    }

    std::vector<num::RngStream> row_rngs;
    row_rngs.reserve(static_cast<std::size_t>(batch_size));
    for (std::int64_t r = 0; r < batch_size; ++r)
        row_rngs.emplace_back(stream.seed(), base + static_cast<std::uint64_t>(r));

    // Row environments keep per-row draw shapes exact across stage runs.
    std::vector<NamedValues> env(static_cast<std::size_t>(batch_size));

    const auto& stages = sim.stages();
    std::size_t si = 0;
    while (si < stages.size()) {
        if (stages[si].batched()) {
            const Stage& stage = stages[si];
            NamedBatch input(batch_size);
            for (const auto& name : stage.inputs) input.set(name, batch.at(name), batch.is_meta(name));
            num::RngStream stage_rng(stream.seed(), base + b + 1 + static_cast<std::uint64_t>(si));
            NamedBatch out;
            try {
                out = stage.run_batched(input, stage_rng);
            } catch (const std::exception& e) {
                throw std::runtime_error("stage '" + stage.name + "' failed: " + e.what());
            }
            for (const auto& name : stage.outputs) {
                const num::Array* a = out.find(name);
                if (!a)
                    throw std::runtime_error("stage '" + stage.name + "' did not produce declared output '" + name +
                                             "'");
                batch.set(name, *a);
            }
            ++si;
            continue;
        }

        std::size_t sj = si;
        while (sj < stages.size() && !stages[sj].batched()) ++sj;

        auto run_rows = [&](std::int64_t lo, std::int64_t hi, std::string& error) {
            for (std::int64_t r = lo; r < hi; ++r) {
                for (std::size_t k = si; k < sj; ++k) {
                    const Stage& stage = stages[k];
                    NamedValues in;
                    for (const auto& name : stage.inputs) {
                        if (const num::Array* v = env[static_cast<std::size_t>(r)].find(name))
                            in.set(name, *v);
                        else if (batch.is_meta(name))
                            in.set(name, batch.at(name));
                        else
                            in.set(name, row_of(batch.at(name), r));
                    }
                    try {
                        NamedValues out = stage.run(in, row_rngs[static_cast<std::size_t>(r)]);
                        check_outputs(stage.name, stage.outputs, out);
                        for (const auto& [n, a] : out.items()) env[static_cast<std::size_t>(r)].set(n, a);
                    } catch (const std::exception& e) {
                        error = "stage '" + stage.name + "' failed: " + e.what();
                        return;
                    }
                }
            }
        };

        if (workers == 1 || batch_size == 1) {
            std::string error;
            run_rows(0, batch_size, error);
            if (!error.empty()) throw std::runtime_error(error);
        } else {
            const int n_workers = static_cast<int>(std::min<std::int64_t>(workers, batch_size));
            std::vector<std::thread> threads;
            std::vector<std::string> errors(static_cast<std::size_t>(n_workers));
            const std::int64_t chunk = (batch_size + n_workers - 1) / n_workers;
            for (int w = 0; w < n_workers; ++w) {
                const std::int64_t lo = w * chunk;
                const std::int64_t hi = std::min<std::int64_t>(lo + chunk, batch_size);
                threads.emplace_back([&, lo, hi, w] { run_rows(lo, hi, errors[static_cast<std::size_t>(w)]); });
            }
            for (auto& t : threads) t.join();
            for (const auto& e : errors)
                if (!e.empty()) throw std::runtime_error(e);
        }

        // Stack this run's outputs into the batch in declaration order.
        for (std::size_t k = si; k < sj; ++k)
            for (const auto& name : stages[k].outputs) {
                std::vector<const num::Array*> rows;
                rows.reserve(static_cast<std::size_t>(batch_size));
                for (std::int64_t r = 0; r < batch_size; ++r) rows.push_back(env[static_cast<std::size_t>(r)].find(name));
                batch.set(name, stack_draws(name, rows));
            }
        si = sj;
    }
    return batch;
}

}  // namespace

SimulatorSpec::SimulatorSpec(std::vector<Stage> stages, std::optional<MetaStage> meta)
    : stages_(std::move(stages)), meta_(std::move(meta)) {}

SimulatorSpec make_simulator(std::vector<Stage> stages, std::optional<MetaStage> meta) {
    if (stages.empty()) throw std::invalid_argument("make_simulator: no stages");
    std::set<std::string> available;
    if (meta)
        for (const auto& name : meta->outputs) {
            if (!available.insert(name).second)
                throw std::invalid_argument("make_simulator: duplicate output '" + name + "'");
        }
    for (const auto& stage : stages) {
        if (static_cast<bool>(stage.run) == static_cast<bool>(stage.run_batched))
            throw std::invalid_argument("make_simulator: stage '" + stage.name +
                                        "' must define exactly one of run / run_batched");
        for (const auto& name : stage.inputs)
            if (!available.count(name))
                throw std::invalid_argument("make_simulator: stage '" + stage.name + "' reads unknown name '" + name +
                                            "'");
        for (const auto& name : stage.outputs)
            if (!available.insert(name).second)
                throw std::invalid_argument("make_simulator: duplicate output '" + name + "'");
    }
    return SimulatorSpec(std::move(stages), std::move(meta));
}

NamedBatch sample(const SimulatorSpec& sim, std::int64_t batch_size, num::RngStream& stream) {
    return run_batch(sim, batch_size, stream, 1);
}

NamedBatch sample_parallel(const SimulatorSpec& sim, std::int64_t batch_size, num::RngStream& stream, int workers) {
    return run_batch(sim, batch_size, stream, workers);
}

}  // namespace abi::sim
