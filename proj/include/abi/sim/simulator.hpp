#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "abi/num/rng.hpp"
#include "abi/sim/named_batch.hpp"

namespace abi::sim {

// One composable step of a generative program. Unbatched stages describe a
// single draw and are auto-batched by sample(); batched stages see the whole
// batch at once. Declared inputs/outputs make dependencies checkable before
// anything runs.
struct Stage {
    std::string name;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::function<NamedValues(const NamedValues&, num::RngStream&)> run;
    std::function<NamedBatch(const NamedBatch&, num::RngStream&)> run_batched;

    bool batched() const { return static_cast<bool>(run_batched); }
};

struct MetaStage {
    std::vector<std::string> outputs;
    std::function<NamedValues(num::RngStream&)> run;
};

class SimulatorSpec {
public:
    SimulatorSpec() = default;
    SimulatorSpec(std::vector<Stage> stages, std::optional<MetaStage> meta);

    const std::vector<Stage>& stages() const { return stages_; }
    const std::optional<MetaStage>& meta_stage() const { return meta_; }

private:
    std::vector<Stage> stages_;
    std::optional<MetaStage> meta_;
};

// Validates that every stage only reads names produced by the meta stage or
// earlier stages and that no name is produced twice.
SimulatorSpec make_simulator(std::vector<Stage> stages, std::optional<MetaStage> meta = std::nullopt);

// One batch, deterministic given the stream. Per-row substreams are derived
// as (seed, base + row) where base advances with every call, so consecutive
// calls differ and row draws are independent of batch layout.
NamedBatch sample(const SimulatorSpec& sim, std::int64_t batch_size, num::RngStream& stream);

// Same result as sample() for any worker count; rows are partitioned across
// threads between batched stages.
NamedBatch sample_parallel(const SimulatorSpec& sim, std::int64_t batch_size, num::RngStream& stream, int workers);

}  // namespace abi::sim
