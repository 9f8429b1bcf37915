#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abi/adapt/pipeline.hpp"
#include "abi/approx/train.hpp"
#include "abi/nets/classifier.hpp"
#include "abi/nets/coupling_flow.hpp"
#include "abi/nets/deepset.hpp"
#include "abi/nets/flow_matching.hpp"
#include "abi/nets/point_heads.hpp"
#include "abi/nets/time_series.hpp"
#include "abi/num/optimizer.hpp"
#include "abi/sim/simulator.hpp"

namespace abi::approx {

// What the bundle estimates. likelihood_surrogate trains and evaluates like
// continuous; the pipeline decides the roles, so a surrogate is a bundle
// whose pipeline routes data to inference_variables and parameters to
// inference_conditions.
enum class EstimatorKind { continuous, point, model_comparison, ratio, likelihood_surrogate };

enum class HeadKind { coupling_flow, flow_matching };
enum class SummaryKind { none, deep_set, time_series };

const char* kind_name(EstimatorKind k);

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::continuous;
    HeadKind head = HeadKind::coupling_flow;
    SummaryKind summary = SummaryKind::none;

    nets::CouplingFlowConfig coupling;
    nets::FlowMatchingConfig flow_matching;
    nets::PointHeadsConfig point;
    nets::ClassifierConfig classifier;
    nets::DeepSetConfig deep_set;
    nets::TimeSeriesNetConfig time_series;

    // model_comparison: adapted batch entry holding integer class labels
    std::string label_name = "model_index";
    // optional adapted batch entry with a (batch, set) deep-set mask
    std::string mask_name;
    // model_comparison: prior model probabilities, empty means uniform
    std::vector<double> class_priors;

    void validate() const;
};

// Point estimates per original variable name, scales restored through the
// pipeline inverse.
struct PointEstimate {
    num::Array mean;       // (n_datasets, dim)
    num::Array quantiles;  // (n_datasets, levels, dim)
};

// Adapter, optional summary network, and one inference head behind a single
// train/evaluate surface. Networks are sized lazily from the first adapted
// batch, so construction is cheap and shape errors surface with names.
class EstimatorBundle {
public:
    struct BuiltDims {
        std::int64_t target_dim = 0;
        std::int64_t summary_feature_dim = 0;
        std::int64_t direct_condition_dim = 0;
    };

    EstimatorBundle(adapt::TransformPipeline pipeline, EstimatorConfig config, std::uint64_t seed = 0);

    // Fresh simulations every batch; the data stream only moves forward, so
    // no simulation is ever revisited.
    History fit_online(const sim::SimulatorSpec& simulator, const TrainConfig& cfg);
    // Epoch passes over a fixed dataset, reshuffled per epoch.
    History fit_offline(const OfflineDataset& dataset, const TrainConfig& cfg);
    History fit_offline(const sim::NamedBatch& dataset, const TrainConfig& cfg);

    // continuous/likelihood_surrogate: per inference variable
    // (n_datasets, num_samples, dim), names and scales restored.
    sim::NamedBatch sample(const sim::NamedBatch& conditions, std::int64_t num_samples, num::RngStream& rng) const;

    // continuous/likelihood_surrogate: log density in the original
    // parameterization (head log density plus the pipeline's forward
    // log-Jacobian on inference variables).
    std::vector<double> log_prob(const sim::NamedBatch& data) const;

    // point: per-name mean and quantile estimates on original scales.
    std::map<std::string, PointEstimate> estimate(const sim::NamedBatch& conditions) const;

    // model_comparison: (n_datasets, num_classes) rows on the simplex.
    num::Array classify(const sim::NamedBatch& conditions) const;

    // ratio: estimated log posterior-to-prior density ratio per row.
    std::vector<double> log_ratio(const sim::NamedBatch& data) const;

    // Builds the networks from one example batch without training.
    void initialize(const sim::NamedBatch& example);
    // Builds from recorded dimensions (checkpoint restore path).
    void build(const BuiltDims& dims);
    bool built() const { return built_; }
    const BuiltDims& dims() const { return dims_; }

    const EstimatorConfig& config() const { return config_; }
    const adapt::TransformPipeline& pipeline() const { return pipeline_; }
    const History& history() const { return history_; }
    // Checkpoint restore path; subsequent fits append as usual.
    void restore_history(History history) { history_ = std::move(history); }
    std::uint64_t seed() const { return seed_; }

    num::ParamSet<float>& parameters();
    const num::ParamSet<float>& parameters() const;
    num::AdamW<float>& optimizer();
    const num::AdamW<float>& optimizer() const;

private:
    template <typename BatchFn>
    History fit_loop(BatchFn next_batch, std::int64_t epochs, std::int64_t batches_per_epoch,
                     const TrainConfig& cfg);

    void require_built(const char* op) const;
    void require_kind(const char* op, std::initializer_list<EstimatorKind> allowed) const;
    void build_from_adapted(const sim::NamedBatch& adapted);

    num::TensorF condition_tensor(const sim::NamedBatch& adapted) const;
    num::TensorF target_tensor(const sim::NamedBatch& adapted) const;
    std::vector<std::int64_t> labels(const sim::NamedBatch& adapted) const;
    num::TensorF batch_loss(const sim::NamedBatch& adapted, num::RngStream& noise) const;
    num::TensorF head_sample(std::int64_t n, const num::TensorF& cond, num::RngStream& rng) const;
    num::TensorF head_log_prob(const num::TensorF& target, const num::TensorF& cond) const;

    adapt::TransformPipeline pipeline_;
    EstimatorConfig config_;
    std::uint64_t seed_ = 0;

    bool built_ = false;
    BuiltDims dims_;
    std::int64_t condition_dim_ = 0;

    std::optional<nets::DeepSet<float>> deep_set_;
    std::optional<nets::TimeSeriesNet<float>> time_series_;
    std::optional<nets::CouplingFlow<float>> coupling_;
    std::optional<nets::FlowMatching<float>> flow_matching_;
    std::optional<nets::PointHeads<float>> point_;
    std::optional<nets::Classifier<float>> classifier_;

    num::ParamSet<float> params_;
    std::optional<num::AdamW<float>> optimizer_;
    History history_;
};

}  // namespace abi::approx
