#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "abi/sim/named_batch.hpp"

namespace abi::adapt {

inline constexpr const char* role_inference_variables = "inference_variables";
inline constexpr const char* role_summary_variables = "summary_variables";
inline constexpr const char* role_inference_conditions = "inference_conditions";

enum class Direction { forward, inverse };

// skip: transforms whose operands are absent are passed over. Used internally
// when running partial batches (conditions without targets, or sampled
// targets without conditions); the public default is error.
enum class MissingPolicy { error, skip };

struct Transform {
    enum class Kind {
        convert_dtype,
        drop,
        keep,
        rename,
        broadcast,
        sqrt_value,
        log_value,
        constrain_lower,
        standardize,
        as_set,
        as_time_series,
        concatenate,
    };

    Kind kind;
    std::vector<std::string> names;  // operands (kept names for keep)
    std::string target;              // rename target / broadcast reference / concatenate destination
    double lower = 0.0;
    std::vector<double> means, sds;
    num::DType from_dtype = num::DType::f64;
    num::DType to_dtype = num::DType::f32;
    // Per-source final-axis extents for concatenate, recorded on the first
    // forward pass (or restored from serialization) so inversion can split.
    std::vector<std::int64_t> split_extents;

    bool invertible() const;
    static const char* kind_name(Kind k);
};

struct AdaptResult {
    sim::NamedBatch batch;
    // Per-variable accumulated log|d transformed/d original| per row, merged
    // through concatenation; the inference_variables entry is the
    // change-of-variables correction for densities.
    std::map<std::string, std::vector<double>> log_det;
};

// Ordered transform list. apply() is pure up to the lazily-recorded
// concatenate split tables (guarded by a mutex and constant across batches of
// one experiment).
class TransformPipeline {
public:
    TransformPipeline() : state_(std::make_shared<SplitState>()) {}
    explicit TransformPipeline(std::vector<Transform> transforms)
        : transforms_(std::move(transforms)), state_(std::make_shared<SplitState>()) {}

    const std::vector<Transform>& transforms() const { return transforms_; }

    // Fluent construction.
    TransformPipeline& convert_dtype(num::DType from, num::DType to);
    TransformPipeline& drop(std::vector<std::string> names);
    TransformPipeline& keep(std::vector<std::string> names);
    TransformPipeline& rename(const std::string& from, const std::string& to);
    TransformPipeline& broadcast(const std::string& name, const std::string& to);
    TransformPipeline& sqrt(std::vector<std::string> names);
    TransformPipeline& log(std::vector<std::string> names);
    TransformPipeline& constrain_lower(std::vector<std::string> names, double lower);
    TransformPipeline& standardize(const std::string& name, std::vector<double> means, std::vector<double> sds);
    TransformPipeline& as_set(std::vector<std::string> names);
    TransformPipeline& as_time_series(std::vector<std::string> names);
    TransformPipeline& concatenate(std::vector<std::string> names, const std::string& into);

    sim::NamedBatch apply(const sim::NamedBatch& batch, Direction direction,
                          MissingPolicy missing = MissingPolicy::error) const;

    // Forward with the change-of-variables bookkeeping.
    AdaptResult apply_forward_logdet(const sim::NamedBatch& batch, MissingPolicy missing = MissingPolicy::error) const;

    // True when some transform emits the given name (or it could pass through
    // unchanged is not considered). Used for role validation before training.
    bool produces(const std::string& name) const;

private:
    struct SplitState {
        std::mutex mutex;
        // transform index -> recorded extents
        std::map<std::size_t, std::vector<std::int64_t>> extents;
    };

    std::vector<Transform> transforms_;
    std::shared_ptr<SplitState> state_;

    friend struct PipelineAccess;
};

// JSON round trip; the schema is the ordered transform list used inside
// workflow configs.
std::string pipeline_to_json(const TransformPipeline& p);
TransformPipeline pipeline_from_json(const std::string& text);

}  // namespace abi::adapt
