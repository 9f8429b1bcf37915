#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abi/approx/estimator.hpp"
#include "abi/diag/diagnostics.hpp"
#include "abi/sim/simulator.hpp"

namespace abi::wf {

struct DiagnosticsConfig {
    std::int64_t num_datasets = 100;  // simulated test datasets when none are given
    std::int64_t num_draws = 250;     // posterior draws per dataset
    double band_alpha = 0.95;
    std::vector<double> alpha_grid;  // empty means the default 0.05..0.95 grid
};

// Everything a run needs, parsed from one strict JSON document: the
// generative model, the adapter, the estimator networks, training, and
// diagnostics. Unknown keys anywhere are rejected with their path.
class Workflow {
public:
    static Workflow from_json_text(const std::string& text);
    static Workflow from_file(const std::string& path);

    // The config document with defaults filled in; checkpoints store it.
    const std::string& config_text() const { return config_text_; }
    std::uint64_t seed() const { return seed_; }
    void override_seed(std::uint64_t seed);

    const approx::TrainConfig& training() const { return training_; }
    const approx::EstimatorConfig& estimator_config() const { return estimator_; }
    const adapt::TransformPipeline& pipeline() const { return pipeline_; }
    const DiagnosticsConfig& diagnostics() const { return diagnostics_; }
    double validation_fraction() const { return validation_fraction_; }

    sim::SimulatorSpec simulator() const;
    approx::EstimatorBundle make_bundle() const;

private:
    Workflow() = default;

    std::string config_text_;
    std::string model_json_;
    std::uint64_t seed_ = 0;
    double validation_fraction_ = 0.0;
    adapt::TransformPipeline pipeline_;
    approx::EstimatorConfig estimator_;
    approx::TrainConfig training_;
    DiagnosticsConfig diagnostics_;
};

enum class FitMode { online, offline };

// Trains a fresh bundle per the config. Offline mode requires data and can
// hold out a validation tail; online mode simulates fresh batches. Writes a
// checkpoint when a path is given.
approx::EstimatorBundle workflow_fit(const Workflow& workflow, FitMode mode,
                                     const std::optional<sim::NamedBatch>& data = std::nullopt,
                                     const std::string& checkpoint_path = "");

// Full bundle state: config snapshot, adapter state, parameters, optimizer
// moments, loss history. load(save(x)) reproduces x's outputs bitwise.
void save_checkpoint(const std::string& path, const Workflow& workflow, const approx::EstimatorBundle& bundle);

struct LoadedCheckpoint {
    Workflow workflow;
    approx::EstimatorBundle bundle;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Posterior draws against ground truth over a labeled test batch, plus the
// per-variable metric table (rendered by report_csv).
struct WorkflowDiagnostics {
    std::vector<std::string> variable_names;  // flattened, e.g. "alpha" or "x[2]"
    num::TensorD estimates;                   // (datasets, draws, variables)
    num::TensorD targets;                     // (datasets, variables)
    diag::DiagnosticReport report;
    std::string csv;
};
WorkflowDiagnostics compute_default_diagnostics(const Workflow& workflow, const approx::EstimatorBundle& bundle,
                                                const sim::NamedBatch& test);

// Writes loss.svg, calibration_ecdf.svg, recovery.svg and
// zscore_contraction.svg into outdir; returns the paths. With fewer than 20
// test datasets the ECDF file carries an explanatory note instead of curves.
std::vector<std::string> plot_default_diagnostics(const Workflow& workflow, const approx::EstimatorBundle& bundle,
                                                  const sim::NamedBatch& test, const std::string& outdir);

// Re-simulated observables under posterior parameter draws, reduced to
// per-step median and central 50%/90% bands. series_names select rank-1
// trajectory outputs; time_name supplies the horizontal axis.
struct PredictiveBands {
    std::vector<double> time;
    std::vector<std::string> series;
    num::TensorD median, lower50, upper50, lower90, upper90;  // (steps, series)
};

// Core: one simulator pass per parameter row, stages whose outputs are all
// pre-set (the parameters) are skipped.
PredictiveBands predictive_bands(const sim::SimulatorSpec& simulator, const sim::NamedBatch& parameter_draws,
                                 const std::vector<std::string>& series_names, const std::string& time_name,
                                 num::RngStream& rng);

PredictiveBands posterior_predictive(const approx::EstimatorBundle& bundle, const sim::SimulatorSpec& simulator,
                                     const sim::NamedBatch& observed_row,
                                     const std::vector<std::string>& series_names, const std::string& time_name,
                                     std::int64_t num_draws, num::RngStream& rng);

}  // namespace abi::wf
