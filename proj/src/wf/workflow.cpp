#include "abi/wf/workflow.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "abi/adapt/pipeline.hpp"
#include "abi/sim/conjugate_gaussian.hpp"
#include "abi/sim/lotka_volterra.hpp"
#include "abi/wf/container.hpp"
#include "abi/wf/svg.hpp"

namespace abi::wf {

namespace {

using nlohmann::json;

constexpr int checkpoint_version = 1;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw std::invalid_argument(path + ": " + message);
}

void require_keys(const json& o, const std::set<std::string>& allowed, const std::string& path) {
    if (!o.is_object()) fail(path, "expected a JSON object");
    for (const auto& [key, value] : o.items())
        if (!allowed.count(key)) fail(path, "unknown key \"" + key + "\"");
}

const json* maybe(const json& o, const std::string& key) {
    auto it = o.find(key);
    return it == o.end() ? nullptr : &*it;
}

double get_double(const json& o, const std::string& key, double fallback, const std::string& path) {
    const json* v = maybe(o, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(path + "." + key, "expected a number");
    return v->get<double>();
}

std::int64_t get_int(const json& o, const std::string& key, std::int64_t fallback, const std::string& path) {
    const json* v = maybe(o, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(path + "." + key, "expected an integer");
    return v->get<std::int64_t>();
}

bool get_bool(const json& o, const std::string& key, bool fallback, const std::string& path) {
    const json* v = maybe(o, key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(path + "." + key, "expected a boolean");
    return v->get<bool>();
}

std::string get_string(const json& o, const std::string& key, const std::string& fallback,
                       const std::string& path) {
    const json* v = maybe(o, key);
    if (!v) return fallback;
    if (!v->is_string()) fail(path + "." + key, "expected a string");
    return v->get<std::string>();
}

std::vector<double> get_doubles(const json& o, const std::string& key, std::vector<double> fallback,
                                const std::string& path) {
    const json* v = maybe(o, key);
    if (!v) return fallback;
    if (!v->is_array()) fail(path + "." + key, "expected an array of numbers");
    std::vector<double> out;
    for (const json& x : *v) {
        if (!x.is_number()) fail(path + "." + key, "expected an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

std::vector<std::int64_t> get_ints(const json& o, const std::string& key, std::vector<std::int64_t> fallback,
                                   const std::string& path) {
    const json* v = maybe(o, key);
    if (!v) return fallback;
    if (!v->is_array()) fail(path + "." + key, "expected an array of integers");
    std::vector<std::int64_t> out;
    for (const json& x : *v) {
        if (!x.is_number_integer()) fail(path + "." + key, "expected an array of integers");
        out.push_back(x.get<std::int64_t>());
    }
    return out;
}

// --- model section ---

sim::SimulatorSpec build_model(const json& m, const std::string& path, bool allow_mixture = true);

sim::SimulatorSpec build_conjugate(const json& m, const std::string& path) {
    require_keys(m, {"name", "prior_mean", "prior_sd", "obs_sd", "n"}, path);
    sim::ConjugateGaussianConfig cfg;
    cfg.prior_mean = get_double(m, "prior_mean", cfg.prior_mean, path);
    cfg.prior_sd = get_double(m, "prior_sd", cfg.prior_sd, path);
    cfg.obs_sd = get_double(m, "obs_sd", cfg.obs_sd, path);
    cfg.n = get_int(m, "n", cfg.n, path);
    try {
        return sim::conjugate_gaussian_simulator(cfg);
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

sim::SimulatorSpec build_lotka_volterra(const json& m, const std::string& path) {
    require_keys(m,
                 {"name", "t_span", "t_steps", "initial_state", "subsample", "obs_prob", "noise_scale", "lags",
                  "substeps", "with_summaries"},
                 path);
    sim::LotkaVolterraConfig cfg;
    const auto span = get_doubles(m, "t_span", {cfg.t_span[0], cfg.t_span[1]}, path);
    if (span.size() != 2) fail(path + ".t_span", "expected [start, end]");
    cfg.t_span = {span[0], span[1]};
    cfg.t_steps = get_int(m, "t_steps", cfg.t_steps, path);
    const auto init = get_doubles(m, "initial_state", {cfg.initial_state[0], cfg.initial_state[1]}, path);
    if (init.size() != 2) fail(path + ".initial_state", "expected [prey, predator]");
    cfg.initial_state = {init[0], init[1]};
    cfg.subsample = get_int(m, "subsample", cfg.subsample, path);
    cfg.obs_prob = get_double(m, "obs_prob", cfg.obs_prob, path);
    cfg.noise_scale = get_double(m, "noise_scale", cfg.noise_scale, path);
    cfg.lags = get_ints(m, "lags", cfg.lags, path);
    cfg.substeps = get_int(m, "substeps", cfg.substeps, path);
    cfg.with_summaries = get_bool(m, "with_summaries", cfg.with_summaries, path);
    try {
        return sim::lotka_volterra_simulator(cfg);
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

sim::SimulatorSpec build_mixture(const json& m, const std::string& path) {
    require_keys(m, {"name", "label", "priors", "components"}, path);
    const std::string label = get_string(m, "label", "model_index", path);
    const json* comps = maybe(m, "components");
    if (!comps || !comps->is_array() || comps->size() < 2)
        fail(path + ".components", "expected an array of at least two model sections");

    std::vector<sim::SimulatorSpec> specs;
    std::vector<std::string> outputs0;
    for (std::size_t j = 0; j < comps->size(); ++j) {
        const std::string comp_path = path + ".components[" + std::to_string(j) + "]";
        sim::SimulatorSpec spec = build_model((*comps)[j], comp_path, /*allow_mixture=*/false);
        if (spec.meta_stage()) fail(comp_path, "mixture components cannot have a meta stage");
        std::vector<std::string> outputs;
        for (const sim::Stage& stage : spec.stages()) {
            if (!stage.run) fail(comp_path, "mixture components need per-draw stages");
            outputs.insert(outputs.end(), stage.outputs.begin(), stage.outputs.end());
        }
        std::sort(outputs.begin(), outputs.end());
        if (j == 0)
            outputs0 = outputs;
        else if (outputs != outputs0)
            fail(comp_path, "mixture components must produce the same outputs");
        specs.push_back(std::move(spec));
    }

    std::vector<double> priors =
        get_doubles(m, "priors", std::vector<double>(specs.size(), 1.0 / static_cast<double>(specs.size())), path);
    if (priors.size() != specs.size()) fail(path + ".priors", "one prior weight per component");
    double total = 0.0;
    for (double p : priors) {
        if (!(p > 0.0)) fail(path + ".priors", "weights must be positive");
        total += p;
    }
    for (double& p : priors) p /= total;

    sim::Stage stage;
    stage.name = "mixture";
    stage.outputs = outputs0;
    stage.outputs.push_back(label);
    stage.run = [specs, priors, label](const sim::NamedValues&, num::RngStream& rng) {
        const double u = rng.uniform();
        std::size_t pick = 0;
        double cumulative = 0.0;
        for (std::size_t j = 0; j < priors.size(); ++j) {
            cumulative += priors[j];
            if (u < cumulative || j + 1 == priors.size()) {
                pick = j;
                break;
            }
        }
        sim::NamedValues values;
        for (const sim::Stage& inner : specs[pick].stages()) {
            const sim::NamedValues produced = inner.run(values, rng);
            for (const auto& [n, a] : produced.items()) values.set(n, a);
        }
        values.set_scalar(label, static_cast<double>(pick));
        return values;
    };
    return sim::make_simulator({stage});
}

sim::SimulatorSpec build_model(const json& m, const std::string& path, bool allow_mixture) {
    if (!m.is_object()) fail(path, "expected a JSON object");
    const std::string name = get_string(m, "name", "", path);
    if (name.empty()) fail(path, "missing model \"name\"");
    if (name == "conjugate_gaussian") return build_conjugate(m, path);
    if (name == "lotka_volterra") return build_lotka_volterra(m, path);
    if (name == "mixture") {
        if (!allow_mixture) fail(path, "mixtures cannot nest");
        return build_mixture(m, path);
    }
    fail(path, "unknown model \"" + name + "\" (known: conjugate_gaussian, lotka_volterra, mixture)");
}

// --- networks section ---

approx::EstimatorConfig parse_networks(const json& o, const std::string& path) {
    require_keys(o,
                 {"kind", "head", "summary", "coupling", "flow_matching", "point", "classifier", "deep_set",
                  "time_series", "label_name", "mask_name", "class_priors"},
                 path);
    approx::EstimatorConfig cfg;

    const std::string kind = get_string(o, "kind", "continuous", path);
    if (kind == "continuous")
        cfg.kind = approx::EstimatorKind::continuous;
    else if (kind == "point")
        cfg.kind = approx::EstimatorKind::point;
    else if (kind == "model_comparison")
        cfg.kind = approx::EstimatorKind::model_comparison;
    else if (kind == "ratio")
        cfg.kind = approx::EstimatorKind::ratio;
    else if (kind == "likelihood_surrogate")
        cfg.kind = approx::EstimatorKind::likelihood_surrogate;
    else
        fail(path + ".kind", "unknown estimator kind \"" + kind + "\"");

    const std::string head = get_string(o, "head", "coupling_flow", path);
    if (head == "coupling_flow")
        cfg.head = approx::HeadKind::coupling_flow;
    else if (head == "flow_matching")
        cfg.head = approx::HeadKind::flow_matching;
    else
        fail(path + ".head", "unknown head \"" + head + "\"");

    const std::string summary = get_string(o, "summary", "none", path);
    if (summary == "none")
        cfg.summary = approx::SummaryKind::none;
    else if (summary == "deep_set")
        cfg.summary = approx::SummaryKind::deep_set;
    else if (summary == "time_series")
        cfg.summary = approx::SummaryKind::time_series;
    else
        fail(path + ".summary", "unknown summary network \"" + summary + "\"");

    if (const json* c = maybe(o, "coupling")) {
        const std::string p = path + ".coupling";
        require_keys(*c, {"num_blocks", "subnet_widths", "clamp", "base", "dof"}, p);
        cfg.coupling.num_blocks = get_int(*c, "num_blocks", cfg.coupling.num_blocks, p);
        cfg.coupling.subnet_widths = get_ints(*c, "subnet_widths", cfg.coupling.subnet_widths, p);
        cfg.coupling.clamp = get_double(*c, "clamp", cfg.coupling.clamp, p);
        const std::string base = get_string(*c, "base", "normal", p);
        if (base == "normal")
            cfg.coupling.base = nets::BaseDistribution::normal;
        else if (base == "student_t")
            cfg.coupling.base = nets::BaseDistribution::student_t;
        else
            fail(p + ".base", "unknown base distribution \"" + base + "\"");
        cfg.coupling.dof = get_double(*c, "dof", cfg.coupling.dof, p);
    }
    if (const json* c = maybe(o, "flow_matching")) {
        const std::string p = path + ".flow_matching";
        require_keys(*c, {"vnet_widths", "time_freqs", "sigma_min", "sample_steps", "density_steps",
                          "exact_trace_max_dim"},
                     p);
        cfg.flow_matching.vnet_widths = get_ints(*c, "vnet_widths", cfg.flow_matching.vnet_widths, p);
        cfg.flow_matching.time_freqs = get_int(*c, "time_freqs", cfg.flow_matching.time_freqs, p);
        cfg.flow_matching.sigma_min = get_double(*c, "sigma_min", cfg.flow_matching.sigma_min, p);
        cfg.flow_matching.sample_steps = get_int(*c, "sample_steps", cfg.flow_matching.sample_steps, p);
        cfg.flow_matching.density_steps = get_int(*c, "density_steps", cfg.flow_matching.density_steps, p);
        cfg.flow_matching.exact_trace_max_dim =
            get_int(*c, "exact_trace_max_dim", cfg.flow_matching.exact_trace_max_dim, p);
    }
    if (const json* c = maybe(o, "point")) {
        const std::string p = path + ".point";
        require_keys(*c, {"trunk_widths", "quantile_levels"}, p);
        cfg.point.trunk_widths = get_ints(*c, "trunk_widths", cfg.point.trunk_widths, p);
        cfg.point.quantile_levels = get_doubles(*c, "quantile_levels", cfg.point.quantile_levels, p);
    }
    if (const json* c = maybe(o, "classifier")) {
        const std::string p = path + ".classifier";
        require_keys(*c, {"trunk_widths", "num_classes"}, p);
        cfg.classifier.trunk_widths = get_ints(*c, "trunk_widths", cfg.classifier.trunk_widths, p);
        cfg.classifier.num_classes = get_int(*c, "num_classes", cfg.classifier.num_classes, p);
    }
    if (const json* c = maybe(o, "deep_set")) {
        const std::string p = path + ".deep_set";
        require_keys(*c, {"phi_widths", "rho_widths", "summary_dim"}, p);
        cfg.deep_set.phi_widths = get_ints(*c, "phi_widths", cfg.deep_set.phi_widths, p);
        cfg.deep_set.rho_widths = get_ints(*c, "rho_widths", cfg.deep_set.rho_widths, p);
        cfg.deep_set.summary_dim = get_int(*c, "summary_dim", cfg.deep_set.summary_dim, p);
    }
    if (const json* c = maybe(o, "time_series")) {
        const std::string p = path + ".time_series";
        require_keys(*c, {"hidden", "projection_widths", "summary_dim"}, p);
        cfg.time_series.hidden = get_int(*c, "hidden", cfg.time_series.hidden, p);
        cfg.time_series.projection_widths = get_ints(*c, "projection_widths", cfg.time_series.projection_widths, p);
        cfg.time_series.summary_dim = get_int(*c, "summary_dim", cfg.time_series.summary_dim, p);
    }
    cfg.label_name = get_string(o, "label_name", cfg.label_name, path);
    cfg.mask_name = get_string(o, "mask_name", cfg.mask_name, path);
    cfg.class_priors = get_doubles(o, "class_priors", cfg.class_priors, path);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
    return cfg;
}

std::string palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return colors[i % 6];
}

double local_quantile(std::vector<double>& values, double p) {
    std::sort(values.begin(), values.end());
    const double position = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(position);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (position - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

// Posterior draws flattened next to ground truth, shared by the diagnostics
// table and the plots.
struct SampledDraws {
    std::vector<std::string> labels;
    num::TensorD estimates;  // (datasets, draws, variables)
    num::TensorD targets;    // (datasets, variables)
    std::vector<double> prior_variance;
};

SampledDraws sample_draws(const Workflow& workflow, const approx::EstimatorBundle& bundle,
                          const sim::NamedBatch& test) {
    if (!bundle.built()) throw std::invalid_argument("diagnostics: train or load a bundle first");
    const auto kind = bundle.config().kind;
    if (kind != approx::EstimatorKind::continuous && kind != approx::EstimatorKind::likelihood_surrogate)
        throw std::invalid_argument("diagnostics: posterior diagnostics need a continuous estimator, got " +
                                    std::string(approx::kind_name(kind)));

    const std::int64_t datasets = test.batch_size();
    const std::int64_t draws = workflow.diagnostics().num_draws;
    num::RngStream rng(workflow.seed(), 0xD1A6);
    const sim::NamedBatch samples = bundle.sample(test, draws, rng);

    SampledDraws out;
    std::int64_t total_dim = 0;
    for (const auto& [name, array] : samples.items()) total_dim += array.extent(2);
    out.estimates = num::TensorD({datasets, draws, total_dim});
    out.targets = num::TensorD({datasets, total_dim});
    auto est = out.estimates.mutable_data();
    auto tgt = out.targets.mutable_data();

    std::int64_t column = 0;
    for (const auto& [name, array] : samples.items()) {
        const std::int64_t dim = array.extent(2);
        if (!test.contains(name))
            throw std::invalid_argument("diagnostics: test batch lacks ground truth entry '" + name + "'");
        const num::Array& truth = test.at(name);
        if (truth.numel() != datasets * dim)
            throw std::invalid_argument("diagnostics: test entry '" + name + "' has " +
                                        num::shape_str(truth.shape()) + ", expected " + std::to_string(dim) +
                                        " values per dataset");
        for (std::int64_t d = 0; d < dim; ++d)
            out.labels.push_back(dim == 1 ? name : name + "[" + std::to_string(d) + "]");

        const std::vector<double> sampled = array.to_doubles();
        for (std::int64_t m = 0; m < datasets; ++m)
            for (std::int64_t l = 0; l < draws; ++l)
                for (std::int64_t d = 0; d < dim; ++d)
                    est[static_cast<std::size_t>((m * draws + l) * total_dim + column + d)] =
                        sampled[static_cast<std::size_t>((m * draws + l) * dim + d)];
        const std::vector<double> truths = truth.to_doubles();
        for (std::int64_t m = 0; m < datasets; ++m)
            for (std::int64_t d = 0; d < dim; ++d)
                tgt[static_cast<std::size_t>(m * total_dim + column + d)] =
                    truths[static_cast<std::size_t>(m * dim + d)];
        column += dim;
    }

    // ground truths come from prior simulations, so their spread is the prior
    out.prior_variance.resize(static_cast<std::size_t>(total_dim));
    for (std::int64_t v = 0; v < total_dim; ++v) {
        double mean = 0.0;
        for (std::int64_t m = 0; m < datasets; ++m) mean += tgt[static_cast<std::size_t>(m * total_dim + v)];
        mean /= static_cast<double>(datasets);
        double var = 0.0;
        for (std::int64_t m = 0; m < datasets; ++m) {
            const double d = tgt[static_cast<std::size_t>(m * total_dim + v)] - mean;
            var += d * d;
        }
        out.prior_variance[static_cast<std::size_t>(v)] = var / static_cast<double>(datasets - 1);
    }
    return out;
}

}  // namespace

// --- Workflow ---

Workflow Workflow::from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    require_keys(root, {"seed", "model", "adapter", "networks", "training", "diagnostics"}, "config");

    Workflow wf;
    wf.config_text_ = root.dump();
    if (const json* s = maybe(root, "seed")) {
        if (!s->is_number_unsigned() && !s->is_number_integer()) fail("config.seed", "expected an integer");
        wf.seed_ = s->get<std::uint64_t>();
    }

    const json* model = maybe(root, "model");
    if (!model) fail("config", "missing \"model\" section");
    build_model(*model, "config.model");  // validates; rebuilt on demand
    wf.model_json_ = model->dump();

    const json* adapter = maybe(root, "adapter");
    if (!adapter) fail("config", "missing \"adapter\" section");
    wf.pipeline_ = adapt::pipeline_from_json(adapter->dump());

    wf.estimator_ = maybe(root, "networks") ? parse_networks(*maybe(root, "networks"), "config.networks")
                                            : approx::EstimatorConfig{};

    if (const json* t = maybe(root, "training")) {
        const std::string p = "config.training";
        require_keys(*t,
                     {"epochs", "batch_size", "num_batches_per_epoch", "learning_rate", "learning_rate_floor",
                      "validation_fraction"},
                     p);
        wf.training_.epochs = get_int(*t, "epochs", wf.training_.epochs, p);
        wf.training_.batch_size = get_int(*t, "batch_size", wf.training_.batch_size, p);
        wf.training_.num_batches_per_epoch =
            get_int(*t, "num_batches_per_epoch", wf.training_.num_batches_per_epoch, p);
        wf.training_.learning_rate = get_double(*t, "learning_rate", wf.training_.learning_rate, p);
        wf.training_.learning_rate_floor =
            get_double(*t, "learning_rate_floor", wf.training_.learning_rate_floor, p);
        wf.validation_fraction_ = get_double(*t, "validation_fraction", 0.0, p);
        if (!(wf.validation_fraction_ >= 0.0 && wf.validation_fraction_ < 1.0))
            fail(p + ".validation_fraction", "expected a fraction in [0, 1)");
        try {
            wf.training_.validate();
        } catch (const std::invalid_argument& e) {
            fail(p, e.what());
        }
    }

    if (const json* d = maybe(root, "diagnostics")) {
        const std::string p = "config.diagnostics";
        require_keys(*d, {"num_datasets", "num_draws", "band_alpha", "alpha_grid"}, p);
        wf.diagnostics_.num_datasets = get_int(*d, "num_datasets", wf.diagnostics_.num_datasets, p);
        wf.diagnostics_.num_draws = get_int(*d, "num_draws", wf.diagnostics_.num_draws, p);
        wf.diagnostics_.band_alpha = get_double(*d, "band_alpha", wf.diagnostics_.band_alpha, p);
        wf.diagnostics_.alpha_grid = get_doubles(*d, "alpha_grid", wf.diagnostics_.alpha_grid, p);
    }
    {
        const std::string p = "config.diagnostics";
        const DiagnosticsConfig& d = wf.diagnostics_;
        if (d.num_datasets < 20) fail(p + ".num_datasets", "rank diagnostics need at least 20 datasets");
        if (!(d.band_alpha > 0.0 && d.band_alpha < 1.0)) fail(p + ".band_alpha", "expected a level in (0, 1)");
        double min_tail = 0.025;  // default grid tops out at 0.95
        for (double a : d.alpha_grid) {
            if (!(a > 0.0 && a < 1.0)) fail(p + ".alpha_grid", "levels must lie in (0, 1)");
            min_tail = std::min(min_tail, (1.0 - a) / 2.0);
        }
        if (static_cast<double>(d.num_draws) * min_tail < 1.0)
            fail(p + ".num_draws",
                 std::to_string(d.num_draws) + " draws cannot resolve the widest credible interval");
    }

    // role checks: the adapter must emit what the networks consume
    const bool needs_targets = wf.estimator_.kind != approx::EstimatorKind::model_comparison;
    if (needs_targets && !wf.pipeline_.produces(adapt::role_inference_variables))
        fail("config.adapter", std::string("no transform produces \"") + adapt::role_inference_variables + "\"");
    if (wf.estimator_.summary != approx::SummaryKind::none &&
        !wf.pipeline_.produces(adapt::role_summary_variables))
        fail("config.adapter", std::string("summary network configured but no transform produces \"") +
                                   adapt::role_summary_variables + "\"");
    if (wf.estimator_.kind == approx::EstimatorKind::model_comparison && model->contains("components")) {
        const std::size_t components = (*model)["components"].size();
        if (static_cast<std::size_t>(wf.estimator_.classifier.num_classes) != components)
            fail("config.networks.classifier.num_classes", "got " +
                                                               std::to_string(wf.estimator_.classifier.num_classes) +
                                                               " classes for " + std::to_string(components) +
                                                               " mixture components");
    }
    return wf;
}

Workflow Workflow::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str());
}

void Workflow::override_seed(std::uint64_t seed) {
    json root = json::parse(config_text_);
    root["seed"] = seed;
    config_text_ = root.dump();
    seed_ = seed;
}

sim::SimulatorSpec Workflow::simulator() const { return build_model(json::parse(model_json_), "config.model"); }

approx::EstimatorBundle Workflow::make_bundle() const {
    return approx::EstimatorBundle(pipeline_, estimator_, seed_);
}

// --- fit ---

approx::EstimatorBundle workflow_fit(const Workflow& workflow, FitMode mode,
                                     const std::optional<sim::NamedBatch>& data,
                                     const std::string& checkpoint_path) {
    approx::EstimatorBundle bundle = workflow.make_bundle();
    approx::TrainConfig cfg = workflow.training();
    cfg.seed = workflow.seed();

    if (mode == FitMode::offline) {
        if (!data) throw std::invalid_argument("workflow fit: offline mode needs a dataset");
        const std::int64_t total = data->batch_size();
        const auto held_out = static_cast<std::int64_t>(std::floor(workflow.validation_fraction() *
                                                                   static_cast<double>(total)));
        if (held_out > 0) {
            if (total - held_out < 1)
                throw std::invalid_argument("workflow fit: validation split leaves no training rows");
            std::vector<std::int64_t> train_rows(static_cast<std::size_t>(total - held_out));
            std::vector<std::int64_t> val_rows(static_cast<std::size_t>(held_out));
            std::iota(train_rows.begin(), train_rows.end(), 0);
            std::iota(val_rows.begin(), val_rows.end(), total - held_out);
            cfg.validation = approx::gather_batch_rows(*data, val_rows);
            bundle.fit_offline(approx::gather_batch_rows(*data, train_rows), cfg);
        } else {
            bundle.fit_offline(*data, cfg);
        }
    } else {
        if (data) throw std::invalid_argument("workflow fit: online mode takes no dataset");
        if (workflow.validation_fraction() > 0.0)
            throw std::invalid_argument("workflow fit: validation_fraction needs offline mode");
        bundle.fit_online(workflow.simulator(), cfg);
    }

    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, workflow, bundle);
    return bundle;
}

// --- checkpoints ---

void save_checkpoint(const std::string& path, const Workflow& workflow, const approx::EstimatorBundle& bundle) {
    if (!bundle.built()) throw std::invalid_argument("checkpoint: bundle has no built networks to save");

    ArrayContainer container;
    json meta;
    meta["checkpoint_version"] = checkpoint_version;
    meta["config"] = json::parse(workflow.config_text());
    meta["adapter_state"] = json::parse(adapt::pipeline_to_json(bundle.pipeline()));
    meta["seed"] = bundle.seed();
    meta["dims"] = {{"target_dim", bundle.dims().target_dim},
                    {"summary_feature_dim", bundle.dims().summary_feature_dim},
                    {"direct_condition_dim", bundle.dims().direct_condition_dim}};
    meta["step"] = bundle.optimizer().step_count();
    // doubles round-trip exactly through the JSON dump, so the history keeps
    // full precision inside the metadata entry
    meta["history"] = {{"train", bundle.history().train}, {"validation", bundle.history().validation}};
    container.put_json("meta", meta.dump());

    for (const auto& item : bundle.parameters()) container.put_f32("param/" + item.name, item.tensor);

    const auto& optimizer = bundle.optimizer();
    const auto& params = bundle.parameters();
    auto widen = [](const num::TensorF& t) {
        return num::TensorD(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        container.put_f64("adam_m/" + params.at(i).name, widen(optimizer.first_moments()[i]));
        container.put_f64("adam_v/" + params.at(i).name, widen(optimizer.second_moments()[i]));
    }
    container.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const ArrayContainer container = ArrayContainer::load(path);
    const json meta = json::parse(container.json_text("meta"));
    const int version = meta.at("checkpoint_version").get<int>();
    if (version > checkpoint_version)
        throw std::runtime_error("checkpoint: '" + path + "' has version " + std::to_string(version) +
                                 ", this build reads up to " + std::to_string(checkpoint_version));

    Workflow workflow = Workflow::from_json_text(meta.at("config").dump());
    adapt::TransformPipeline pipeline = adapt::pipeline_from_json(meta.at("adapter_state").dump());
    approx::EstimatorBundle bundle(pipeline, workflow.estimator_config(),
                                   meta.at("seed").get<std::uint64_t>());
    approx::EstimatorBundle::BuiltDims dims;
    dims.target_dim = meta.at("dims").at("target_dim").get<std::int64_t>();
    dims.summary_feature_dim = meta.at("dims").at("summary_feature_dim").get<std::int64_t>();
    dims.direct_condition_dim = meta.at("dims").at("direct_condition_dim").get<std::int64_t>();
    bundle.build(dims);

    for (auto& item : bundle.parameters()) {
        const num::TensorF stored = container.f32("param/" + item.name);
        if (stored.shape() != item.tensor.shape())
            throw std::runtime_error("checkpoint: parameter '" + item.name + "' has shape " +
                                     num::shape_str(stored.shape()) + ", the rebuilt network expects " +
                                     num::shape_str(item.tensor.shape()));
        std::copy(stored.data().begin(), stored.data().end(), item.tensor.mutable_data().begin());
    }

    auto& optimizer = bundle.optimizer();
    auto narrow = [](const num::TensorD& t, num::TensorF& into, const std::string& name) {
        if (t.shape() != into.shape())
            throw std::runtime_error("checkpoint: optimizer entry '" + name + "' shape mismatch");
        auto dst = into.mutable_data();
        auto src = t.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(src[i]);
    };
    const auto& params = bundle.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.at(i).name;
        narrow(container.f64("adam_m/" + name), optimizer.first_moments()[i], "adam_m/" + name);
        narrow(container.f64("adam_v/" + name), optimizer.second_moments()[i], "adam_v/" + name);
    }
    optimizer.set_step_count(meta.at("step").get<std::int64_t>());

    approx::History history;
    history.train = meta.at("history").at("train").get<std::vector<double>>();
    history.validation = meta.at("history").at("validation").get<std::vector<double>>();
    bundle.restore_history(std::move(history));

    return {std::move(workflow), std::move(bundle)};
}

// --- diagnostics ---

WorkflowDiagnostics compute_default_diagnostics(const Workflow& workflow, const approx::EstimatorBundle& bundle,
                                                const sim::NamedBatch& test) {
    SampledDraws draws = sample_draws(workflow, bundle, test);
    WorkflowDiagnostics out;
    out.variable_names = draws.labels;
    out.report = diag::diagnostic_report(draws.labels, draws.estimates, draws.targets, draws.prior_variance,
                                         workflow.seed(), workflow.diagnostics().band_alpha,
                                         workflow.diagnostics().alpha_grid);
    out.csv = diag::report_csv(out.report);
    out.estimates = std::move(draws.estimates);
    out.targets = std::move(draws.targets);
    return out;
}

std::vector<std::string> plot_default_diagnostics(const Workflow& workflow, const approx::EstimatorBundle& bundle,
                                                  const sim::NamedBatch& test, const std::string& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    const SampledDraws draws = sample_draws(workflow, bundle, test);
    const std::int64_t datasets = test.batch_size();
    const auto vars = static_cast<std::size_t>(draws.estimates.extent(2));
    const int columns = vars <= 1 ? 1 : (vars <= 4 ? 2 : 3);
    std::vector<std::string> written;

    {
        Figure fig(1);
        const std::size_t p = fig.add_panel("training progress", "epoch", "loss");
        const approx::History& history = bundle.history();
        if (history.train.empty()) {
            fig.note(p, "no recorded training history");
        } else {
            std::vector<double> epochs(history.train.size());
            std::iota(epochs.begin(), epochs.end(), 1.0);
            fig.line(p, epochs, history.train, palette(0));
            fig.legend(p, "train", palette(0));
            if (!history.validation.empty()) {
                fig.line(p, epochs, history.validation, palette(1));
                fig.legend(p, "validation", palette(1));
            }
        }
        const std::string path = (fs::path(outdir) / "loss.svg").string();
        fig.save(path);
        written.push_back(path);
    }

    {
        Figure fig(columns);
        if (datasets < 20) {
            const std::size_t p = fig.add_panel("calibration ECDF", "rank", "ECDF - rank");
            fig.note(p, "needs at least 20 test datasets, got " + std::to_string(datasets));
        } else {
            num::RngStream tie(workflow.seed(), 0);
            const num::TensorD ranks = diag::fractional_ranks(draws.estimates, draws.targets, tie);
            const diag::EcdfDiagnostic ecdf =
                diag::calibration_ecdf(ranks, workflow.diagnostics().band_alpha, /*difference=*/true);
            for (std::size_t v = 0; v < vars; ++v) {
                const std::size_t p = fig.add_panel(draws.labels[v], "rank", "ECDF - rank");
                fig.band(p, ecdf.grid, ecdf.lower, ecdf.upper, "#9e9e9e", 0.3);
                fig.line(p, ecdf.grid, ecdf.ecdf[v], palette(v));
            }
        }
        const std::string path = (fs::path(outdir) / "calibration_ecdf.svg").string();
        fig.save(path);
        written.push_back(path);
    }

    {
        const auto series = diag::recovery(draws.estimates, draws.targets);
        Figure fig(columns);
        for (std::size_t v = 0; v < vars; ++v) {
            char title[96];
            std::snprintf(title, sizeof(title), "%s (r = %.3f)", draws.labels[v].c_str(), series[v].correlation);
            const std::size_t p = fig.add_panel(title, "ground truth", "posterior median");
            fig.segments(p, series[v].truth, series[v].lower, series[v].upper, palette(v));
            fig.scatter(p, series[v].truth, series[v].median, palette(v));
            fig.diagonal(p);
        }
        const std::string path = (fs::path(outdir) / "recovery.svg").string();
        fig.save(path);
        written.push_back(path);
    }

    {
        const auto series = diag::zscore_contraction(draws.estimates, draws.targets, draws.prior_variance);
        Figure fig(columns);
        for (std::size_t v = 0; v < vars; ++v) {
            const std::size_t p = fig.add_panel(draws.labels[v], "posterior contraction", "posterior z-score");
            fig.scatter(p, series[v].contraction, series[v].z, palette(v));
        }
        const std::string path = (fs::path(outdir) / "zscore_contraction.svg").string();
        fig.save(path);
        written.push_back(path);
    }
    return written;
}

// --- posterior predictive ---

PredictiveBands predictive_bands(const sim::SimulatorSpec& simulator, const sim::NamedBatch& parameter_draws,
                                 const std::vector<std::string>& series_names, const std::string& time_name,
                                 num::RngStream& rng) {
    if (series_names.empty()) throw std::invalid_argument("predictive: no series selected");
    if (simulator.meta_stage())
        throw std::invalid_argument("predictive: simulators with a meta stage are not supported");
    const std::int64_t draws = parameter_draws.batch_size();
    if (draws < 1) throw std::invalid_argument("predictive: needs at least one parameter draw");

    // flattened per-name values, one row per draw
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    for (const auto& [name, array] : parameter_draws.items())
        rows.emplace_back(name, array.to_doubles());

    std::int64_t steps = -1;
    std::vector<double> time;
    // trajectories[k] laid out (series, steps)
    std::vector<std::vector<double>> trajectories(static_cast<std::size_t>(draws));

    for (std::int64_t k = 0; k < draws; ++k) {
        sim::NamedValues values;
        for (const auto& [name, flat] : rows) {
            const std::int64_t dim = static_cast<std::int64_t>(flat.size()) / draws;
            std::vector<double> row(flat.begin() + k * dim, flat.begin() + (k + 1) * dim);
            values.set(name, num::Array::from_values({dim}, std::move(row)));
        }
        for (const sim::Stage& stage : simulator.stages()) {
            bool satisfied = !stage.outputs.empty();
            for (const std::string& out : stage.outputs)
                if (!values.contains(out)) satisfied = false;
            if (satisfied) continue;  // outputs pre-set by the parameter draw
            if (!stage.run)
                throw std::invalid_argument("predictive: stage '" + stage.name + "' has no per-draw form");
            const sim::NamedValues produced = stage.run(values, rng);
            for (const auto& [n, a] : produced.items()) values.set(n, a);
        }

        if (k == 0) {
            time = values.at(time_name).to_doubles();
            steps = static_cast<std::int64_t>(time.size());
        }
        auto& traj = trajectories[static_cast<std::size_t>(k)];
        traj.reserve(series_names.size() * static_cast<std::size_t>(steps));
        for (const std::string& name : series_names) {
            const std::vector<double> series = values.at(name).to_doubles();
            if (static_cast<std::int64_t>(series.size()) != steps)
                throw std::runtime_error("predictive: series '" + name + "' length changed across draws");
            traj.insert(traj.end(), series.begin(), series.end());
        }
    }

    const auto n_series = static_cast<std::int64_t>(series_names.size());
    PredictiveBands out;
    out.time = std::move(time);
    out.series = series_names;
    out.median = num::TensorD({steps, n_series});
    out.lower50 = num::TensorD({steps, n_series});
    out.upper50 = num::TensorD({steps, n_series});
    out.lower90 = num::TensorD({steps, n_series});
    out.upper90 = num::TensorD({steps, n_series});

    std::vector<double> pool(static_cast<std::size_t>(draws));
    for (std::int64_t s = 0; s < n_series; ++s) {
        for (std::int64_t t = 0; t < steps; ++t) {
            for (std::int64_t k = 0; k < draws; ++k)
                pool[static_cast<std::size_t>(k)] =
                    trajectories[static_cast<std::size_t>(k)][static_cast<std::size_t>(s * steps + t)];
            const std::size_t cell = static_cast<std::size_t>(t * n_series + s);
            out.lower90.mutable_data()[cell] = local_quantile(pool, 0.05);
            out.lower50.mutable_data()[cell] = local_quantile(pool, 0.25);
            out.median.mutable_data()[cell] = local_quantile(pool, 0.50);
            out.upper50.mutable_data()[cell] = local_quantile(pool, 0.75);
            out.upper90.mutable_data()[cell] = local_quantile(pool, 0.95);
        }
    }
    return out;
}

PredictiveBands posterior_predictive(const approx::EstimatorBundle& bundle, const sim::SimulatorSpec& simulator,
                                     const sim::NamedBatch& observed_row,
                                     const std::vector<std::string>& series_names, const std::string& time_name,
                                     std::int64_t num_draws, num::RngStream& rng) {
    if (observed_row.batch_size() != 1)
        throw std::invalid_argument("posterior predictive: expected a single observed dataset");
    if (num_draws < 1) throw std::invalid_argument("posterior predictive: needs at least one draw");

    const sim::NamedBatch sampled = bundle.sample(observed_row, num_draws, rng);
    sim::NamedBatch draws(num_draws);
    for (const auto& [name, array] : sampled.items()) {
        num::Shape shape(array.shape().begin() + 1, array.shape().end());  // drop the dataset axis
        draws.set(name, num::Array::from_values(shape, array.to_doubles()));
    }
    return predictive_bands(simulator, draws, series_names, time_name, rng);
}

}  // namespace abi::wf
