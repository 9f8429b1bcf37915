#include "abi/approx/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace abi::approx {

namespace {

num::TensorF to_f32(const num::Array& a) { return a.astype(num::DType::f32).to_tensor<float>(); }

double scalar_value(const num::TensorF& t) { return static_cast<double>(t.data()[0]); }

}  // namespace

const char* kind_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::continuous: return "continuous";
        case EstimatorKind::point: return "point";
        case EstimatorKind::model_comparison: return "model_comparison";
        case EstimatorKind::ratio: return "ratio";
        case EstimatorKind::likelihood_surrogate: return "likelihood_surrogate";
    }
    return "?";
}

void EstimatorConfig::validate() const {
    switch (summary) {
        case SummaryKind::none: break;
        case SummaryKind::deep_set: deep_set.validate(); break;
        case SummaryKind::time_series: time_series.validate(); break;
    }
    switch (kind) {
        case EstimatorKind::continuous:
        case EstimatorKind::likelihood_surrogate:
            if (head == HeadKind::coupling_flow)
                coupling.validate();
            else
                flow_matching.validate();
            break;
        case EstimatorKind::point: point.validate(); break;
        case EstimatorKind::model_comparison:
            classifier.validate();
            if (classifier.num_classes < 2)
                throw std::invalid_argument("estimator: model comparison needs at least 2 classes");
            if (label_name.empty())
                throw std::invalid_argument("estimator: model comparison needs a label entry name");
            if (!class_priors.empty()) {
                if (static_cast<std::int64_t>(class_priors.size()) != classifier.num_classes)
                    throw std::invalid_argument("estimator: class_priors size must match num_classes");
                for (double p : class_priors)
                    if (!(p > 0.0)) throw std::invalid_argument("estimator: class_priors must be positive");
            }
            break;
        case EstimatorKind::ratio: break;  // binary classifier sized at build
    }
}

EstimatorBundle::EstimatorBundle(adapt::TransformPipeline pipeline, EstimatorConfig config, std::uint64_t seed)
    : pipeline_(std::move(pipeline)), config_(std::move(config)), seed_(seed) {
    config_.validate();
}

void EstimatorBundle::require_built(const char* op) const {
    if (!built_)
        throw std::runtime_error(std::string(op) + ": estimator has no networks yet (fit or initialize first)");
}

void EstimatorBundle::require_kind(const char* op, std::initializer_list<EstimatorKind> allowed) const {
    for (EstimatorKind k : allowed)
        if (k == config_.kind) return;
    throw std::invalid_argument(std::string(op) + ": not supported for kind '" + kind_name(config_.kind) + "'");
}

void EstimatorBundle::initialize(const sim::NamedBatch& example) {
    if (built_) return;
    build_from_adapted(pipeline_.apply(example, adapt::Direction::forward, adapt::MissingPolicy::skip));
}

void EstimatorBundle::build_from_adapted(const sim::NamedBatch& adapted) {
    BuiltDims d;
    const bool needs_target = config_.kind != EstimatorKind::model_comparison;
    if (needs_target) {
        const num::Array* tv = adapted.find("inference_variables");
        if (!tv) throw std::invalid_argument("estimator: pipeline produced no 'inference_variables'");
        if (tv->dim() != 2)
            throw std::invalid_argument("estimator: inference variables must be a fixed-length (batch, dim) matrix, got shape " +
                                        num::shape_str(tv->shape()));
        d.target_dim = tv->extent(1);
    }
    if (config_.summary != SummaryKind::none) {
        const num::Array* sv = adapted.find("summary_variables");
        if (!sv) throw std::invalid_argument("estimator: pipeline produced no 'summary_variables' for the summary network");
        if (sv->dim() != 3)
            throw std::invalid_argument("estimator: summary variables must be (batch, elements, features), got shape " +
                                        num::shape_str(sv->shape()));
        d.summary_feature_dim = sv->extent(2);
    }
    if (const num::Array* cv = adapted.find("inference_conditions")) {
        if (cv->dim() != 2)
            throw std::invalid_argument("estimator: 'inference_conditions' must be a (batch, dim) matrix, got shape " +
                                        num::shape_str(cv->shape()));
        d.direct_condition_dim = cv->extent(1);
    }
    build(d);
}

void EstimatorBundle::build(const BuiltDims& dims) {
    if (built_) throw std::logic_error("estimator: networks already built");
    config_.validate();
    dims_ = dims;

    num::RngStream init(seed_, 0);
    std::int64_t cond_dim = dims.direct_condition_dim;
    if (config_.summary == SummaryKind::deep_set) {
        deep_set_.emplace(dims.summary_feature_dim, config_.deep_set, init);
        cond_dim += config_.deep_set.summary_dim;
    } else if (config_.summary == SummaryKind::time_series) {
        time_series_.emplace(dims.summary_feature_dim, config_.time_series, init);
        cond_dim += config_.time_series.summary_dim;
    }
    condition_dim_ = cond_dim;

    switch (config_.kind) {
        case EstimatorKind::continuous:
        case EstimatorKind::likelihood_surrogate:
            if (dims.target_dim < 1) throw std::invalid_argument("estimator: target dimension must be >= 1");
            if (config_.head == HeadKind::coupling_flow)
                coupling_.emplace(dims.target_dim, cond_dim, config_.coupling, init);
            else
                flow_matching_.emplace(dims.target_dim, cond_dim, config_.flow_matching, init);
            break;
        case EstimatorKind::point:
            if (dims.target_dim < 1) throw std::invalid_argument("estimator: target dimension must be >= 1");
            if (cond_dim < 1)
                throw std::invalid_argument("estimator: point estimation needs condition variables "
                                            "(summary_variables or inference_conditions)");
            point_.emplace(dims.target_dim, cond_dim, config_.point, init);
            break;
        case EstimatorKind::model_comparison:
            if (cond_dim < 1)
                throw std::invalid_argument("estimator: model comparison needs condition variables "
                                            "(summary_variables or inference_conditions)");
            classifier_.emplace(cond_dim, config_.classifier, init);
            break;
        case EstimatorKind::ratio: {
            if (dims.target_dim < 1) throw std::invalid_argument("estimator: target dimension must be >= 1");
            if (cond_dim < 1)
                throw std::invalid_argument("estimator: ratio estimation needs condition variables "
                                            "(summary_variables or inference_conditions)");
            nets::ClassifierConfig c = config_.classifier;
            c.num_classes = 2;
            classifier_.emplace(dims.target_dim + cond_dim, c, init);
            break;
        }
    }

    if (deep_set_) deep_set_->register_params(params_, "summary");
    if (time_series_) time_series_->register_params(params_, "summary");
    if (coupling_) coupling_->register_params(params_, "head");
    if (flow_matching_) flow_matching_->register_params(params_, "head");
    if (point_) point_->register_params(params_, "head");
    if (classifier_) classifier_->register_params(params_, "head");

    optimizer_.emplace(params_, num::AdamWConfig<float>{});
    built_ = true;
}

num::ParamSet<float>& EstimatorBundle::parameters() {
    require_built("parameters");
    return params_;
}

const num::ParamSet<float>& EstimatorBundle::parameters() const {
    require_built("parameters");
    return params_;
}

num::AdamW<float>& EstimatorBundle::optimizer() {
    require_built("optimizer");
    return *optimizer_;
}

const num::AdamW<float>& EstimatorBundle::optimizer() const {
    require_built("optimizer");
    return *optimizer_;
}

num::TensorF EstimatorBundle::condition_tensor(const sim::NamedBatch& adapted) const {
    std::vector<num::TensorF> parts;
    if (config_.summary != SummaryKind::none) {
        const num::Array* sv = adapted.find("summary_variables");
        if (!sv) throw std::invalid_argument("estimator: adapted batch is missing 'summary_variables'");
        num::TensorF s = to_f32(*sv);
        if (config_.summary == SummaryKind::deep_set) {
            if (!config_.mask_name.empty()) {
                const num::Array* mv = adapted.find(config_.mask_name);
                if (!mv)
                    throw std::invalid_argument("estimator: adapted batch is missing mask entry '" +
                                                config_.mask_name + "'");
                num::TensorF m = to_f32(*mv);
                parts.push_back(deep_set_->forward(s, &m));
            } else {
                parts.push_back(deep_set_->forward(s));
            }
        } else {
            parts.push_back(time_series_->forward(s));
        }
    }
    if (dims_.direct_condition_dim > 0) {
        const num::Array* cv = adapted.find("inference_conditions");
        if (!cv) throw std::invalid_argument("estimator: adapted batch is missing 'inference_conditions'");
        if (cv->dim() != 2 || cv->extent(1) != dims_.direct_condition_dim)
            throw std::invalid_argument("estimator: 'inference_conditions' must be (batch, " +
                                        std::to_string(dims_.direct_condition_dim) + "), got shape " +
                                        num::shape_str(cv->shape()));
        parts.push_back(to_f32(*cv));
    }
    if (parts.empty()) return num::TensorF();
    return parts.size() == 1 ? parts[0] : num::concat(parts, 1);
}

num::TensorF EstimatorBundle::target_tensor(const sim::NamedBatch& adapted) const {
    const num::Array* tv = adapted.find("inference_variables");
    if (!tv) throw std::invalid_argument("estimator: adapted batch is missing 'inference_variables'");
    if (tv->dim() != 2 || tv->extent(1) != dims_.target_dim)
        throw std::invalid_argument("estimator: inference variables must be (batch, " +
                                    std::to_string(dims_.target_dim) + "), got shape " + num::shape_str(tv->shape()));
    return to_f32(*tv);
}

std::vector<std::int64_t> EstimatorBundle::labels(const sim::NamedBatch& adapted) const {
    const num::Array* lv = adapted.find(config_.label_name);
    if (!lv) throw std::invalid_argument("estimator: adapted batch is missing label entry '" + config_.label_name + "'");
    if (lv->numel() != adapted.batch_size())
        throw std::invalid_argument("estimator: label entry '" + config_.label_name + "' must hold one value per row");
    std::vector<double> raw = lv->to_doubles();
    std::vector<std::int64_t> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double r = std::round(raw[i]);
        if (std::abs(raw[i] - r) > 1e-6)
            throw std::invalid_argument("estimator: label entry '" + config_.label_name + "' must hold integers");
        out[i] = static_cast<std::int64_t>(r);
    }
    return out;
}

num::TensorF EstimatorBundle::batch_loss(const sim::NamedBatch& adapted, num::RngStream& noise) const {
    switch (config_.kind) {
        case EstimatorKind::continuous:
        case EstimatorKind::likelihood_surrogate: {
            num::TensorF theta = target_tensor(adapted);
            num::TensorF cond = condition_tensor(adapted);
            if (coupling_) return num::mul_scalar(num::mean(coupling_->log_prob(theta, cond)), -1.0f);
            return flow_matching_->loss(theta, cond, noise);
        }
        case EstimatorKind::point:
            return point_->loss(condition_tensor(adapted), target_tensor(adapted));
        case EstimatorKind::model_comparison:
            return nets::cross_entropy(classifier_->logits(condition_tensor(adapted)), labels(adapted));
        case EstimatorKind::ratio:
            return nets::binary_ratio_loss(*classifier_, target_tensor(adapted), condition_tensor(adapted), noise);
    }
    throw std::logic_error("estimator: unknown kind");
}

template <typename BatchFn>
History EstimatorBundle::fit_loop(BatchFn next_batch, std::int64_t epochs, std::int64_t batches_per_epoch,
                                  const TrainConfig& cfg) {
    History h;
    if (epochs == 0) return h;

    num::RngStream noise(cfg.seed, 0xB22);
    const std::int64_t total_steps = epochs * batches_per_epoch;
    std::int64_t step_index = 0;

    for (std::int64_t e = 0; e < epochs; ++e) {
        double loss_sum = 0.0;
        for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
            sim::NamedBatch adapted = pipeline_.apply(next_batch(e, b), adapt::Direction::forward);
            if (!built_) build_from_adapted(adapted);
            params_.zero_grad();
            num::TensorF loss = batch_loss(adapted, noise);
            const double value = scalar_value(loss);
            if (!std::isfinite(value))
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(e) +
                                         ", batch " + std::to_string(b));
            num::backward(loss);
            const double lr = num::cosine_lr(cfg.learning_rate, cfg.learning_rate_floor, step_index, total_steps);
            optimizer_->step(params_, static_cast<float>(lr));
            ++step_index;
            loss_sum += value;
        }
        h.train.push_back(loss_sum / static_cast<double>(batches_per_epoch));

        if (cfg.validation) {
            num::RngStream val_noise(cfg.seed, 0xC33);
            sim::NamedBatch adapted = pipeline_.apply(*cfg.validation, adapt::Direction::forward);
            num::NoGradGuard guard;
            h.validation.push_back(scalar_value(batch_loss(adapted, val_noise)));
        }
    }

    history_.train.insert(history_.train.end(), h.train.begin(), h.train.end());
    history_.validation.insert(history_.validation.end(), h.validation.begin(), h.validation.end());
    return h;
}

History EstimatorBundle::fit_online(const sim::SimulatorSpec& simulator, const TrainConfig& cfg) {
    cfg.validate();
    num::RngStream data(cfg.seed, 0xA11);
    return fit_loop([&](std::int64_t, std::int64_t) { return sim::sample(simulator, cfg.batch_size, data); },
                    cfg.epochs, cfg.num_batches_per_epoch, cfg);
}

History EstimatorBundle::fit_offline(const OfflineDataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.batch_size > dataset.size())
        throw std::invalid_argument("offline fit: batch size " + std::to_string(cfg.batch_size) +
                                    " exceeds dataset size " + std::to_string(dataset.size()));
    const std::int64_t n_batches = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::int64_t> order;
    std::int64_t order_epoch = -1;
    return fit_loop(
        [&](std::int64_t e, std::int64_t b) {
            if (e != order_epoch) {
                order = dataset.epoch_order(cfg.seed, e);
                order_epoch = e;
            }
            const std::int64_t lo = b * cfg.batch_size;
            const std::int64_t hi = std::min<std::int64_t>(dataset.size(), lo + cfg.batch_size);
            return dataset.rows(std::vector<std::int64_t>(order.begin() + lo, order.begin() + hi));
        },
        cfg.epochs, n_batches, cfg);
}

History EstimatorBundle::fit_offline(const sim::NamedBatch& dataset, const TrainConfig& cfg) {
    return fit_offline(OfflineDataset(dataset), cfg);
}

num::TensorF EstimatorBundle::head_sample(std::int64_t n, const num::TensorF& cond, num::RngStream& rng) const {
    if (coupling_) return coupling_->sample(n, cond, rng);
    return flow_matching_->sample(n, cond, rng);
}

num::TensorF EstimatorBundle::head_log_prob(const num::TensorF& target, const num::TensorF& cond) const {
    if (coupling_) {
        num::NoGradGuard guard;
        return coupling_->log_prob(target, cond);
    }
    // flow matching drives its own tape for the divergence trace
    return flow_matching_->log_prob(target, cond);
}

sim::NamedBatch EstimatorBundle::sample(const sim::NamedBatch& conditions, std::int64_t num_samples,
                                        num::RngStream& rng) const {
    require_built("sample");
    require_kind("sample", {EstimatorKind::continuous, EstimatorKind::likelihood_surrogate});
    if (num_samples < 1) throw std::invalid_argument("sample: num_samples must be >= 1");

    sim::NamedBatch adapted = pipeline_.apply(conditions, adapt::Direction::forward, adapt::MissingPolicy::skip);
    const std::int64_t n_datasets = conditions.batch_size();
    num::TensorF cond = condition_tensor(adapted);
    num::TensorF rep = cond.defined() ? num::repeat_rows(cond, num_samples) : num::TensorF();
    num::TensorF draws = head_sample(n_datasets * num_samples, rep, rng);

    sim::NamedBatch latent(n_datasets * num_samples);
    latent.set("inference_variables", num::Array::from_tensor(draws));
    sim::NamedBatch restored = pipeline_.apply(latent, adapt::Direction::inverse, adapt::MissingPolicy::skip);

    sim::NamedBatch out(n_datasets);
    for (const auto& [name, value] : restored.items()) {
        if (restored.is_meta(name)) continue;
        num::Shape shape{n_datasets, num_samples};
        for (std::size_t ax = 1; ax < value.shape().size(); ++ax) shape.push_back(value.shape()[ax]);
        if (value.dim() == 1) shape.push_back(1);
        out.set(name, value.reshaped(shape));
    }
    return out;
}

std::vector<double> EstimatorBundle::log_prob(const sim::NamedBatch& data) const {
    require_built("log_prob");
    require_kind("log_prob", {EstimatorKind::continuous, EstimatorKind::likelihood_surrogate});

    adapt::AdaptResult res = pipeline_.apply_forward_logdet(data);
    num::TensorF theta = target_tensor(res.batch);
    num::TensorF cond = condition_tensor(res.batch);
    num::TensorF lp = head_log_prob(theta, cond);

    const auto it = res.log_det.find("inference_variables");
    std::vector<double> out(static_cast<std::size_t>(data.batch_size()));
    auto values = lp.data();
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b] = static_cast<double>(values[b]);
        if (it != res.log_det.end()) out[b] += it->second[b];
    }
    return out;
}

std::map<std::string, PointEstimate> EstimatorBundle::estimate(const sim::NamedBatch& conditions) const {
    require_built("estimate");
    require_kind("estimate", {EstimatorKind::point});

    sim::NamedBatch adapted = pipeline_.apply(conditions, adapt::Direction::forward, adapt::MissingPolicy::skip);
    num::TensorF cond = condition_tensor(adapted);

    num::NoGradGuard guard;
    nets::PointHeads<float>::Output heads = point_->forward(cond);
    const std::int64_t n = conditions.batch_size();
    const std::int64_t levels = static_cast<std::int64_t>(point_->levels().size());

    auto invert = [&](const num::TensorF& matrix) {
        sim::NamedBatch latent(n);
        latent.set("inference_variables", num::Array::from_tensor(matrix));
        return pipeline_.apply(latent, adapt::Direction::inverse, adapt::MissingPolicy::skip);
    };

    sim::NamedBatch mean_named = invert(heads.mean);
    std::vector<sim::NamedBatch> level_named;
    level_named.reserve(static_cast<std::size_t>(levels));
    for (std::int64_t l = 0; l < levels; ++l) {
        num::TensorF q = num::slice(heads.quantiles, 1, l, 1).reshaped_view({n, dims_.target_dim});
        level_named.push_back(invert(q));
    }

    std::map<std::string, PointEstimate> out;
    for (const auto& [name, mean_value] : mean_named.items()) {
        if (mean_named.is_meta(name)) continue;
        const std::int64_t dim = mean_value.numel() / n;
        num::Array quantiles = num::Array::zeros(mean_value.dtype(), {n, levels, dim});
        std::vector<std::vector<double>> per_level;
        per_level.reserve(static_cast<std::size_t>(levels));
        for (std::int64_t l = 0; l < levels; ++l) per_level.push_back(level_named[static_cast<std::size_t>(l)].at(name).to_doubles());
        quantiles.visit_mut([&](auto span) {
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t l = 0; l < levels; ++l)
                    for (std::int64_t j = 0; j < dim; ++j)
                        span[static_cast<std::size_t>((r * levels + l) * dim + j)] =
                            static_cast<typename decltype(span)::value_type>(
                                per_level[static_cast<std::size_t>(l)][static_cast<std::size_t>(r * dim + j)]);
        });
        out.emplace(name, PointEstimate{mean_value, quantiles});
    }
    return out;
}

num::Array EstimatorBundle::classify(const sim::NamedBatch& conditions) const {
    require_built("classify");
    require_kind("classify", {EstimatorKind::model_comparison});

    sim::NamedBatch adapted = pipeline_.apply(conditions, adapt::Direction::forward, adapt::MissingPolicy::skip);
    num::TensorF cond = condition_tensor(adapted);

    num::NoGradGuard guard;
    num::TensorF probs = nets::posterior_model_probs(classifier_->logits(cond));
    const std::int64_t n = probs.extent(0), classes = probs.extent(1);
    std::vector<double> values(static_cast<std::size_t>(n * classes));
    auto pv = probs.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(pv[i]);

    if (!config_.class_priors.empty()) {
        for (std::int64_t r = 0; r < n; ++r) {
            double total = 0.0;
            for (std::int64_t j = 0; j < classes; ++j) {
                values[static_cast<std::size_t>(r * classes + j)] *= config_.class_priors[static_cast<std::size_t>(j)];
                total += values[static_cast<std::size_t>(r * classes + j)];
            }
            for (std::int64_t j = 0; j < classes; ++j) values[static_cast<std::size_t>(r * classes + j)] /= total;
        }
    }
    return num::Array::from_values({n, classes}, std::move(values));
}

std::vector<double> EstimatorBundle::log_ratio(const sim::NamedBatch& data) const {
    require_built("log_ratio");
    require_kind("log_ratio", {EstimatorKind::ratio});

    sim::NamedBatch adapted = pipeline_.apply(data, adapt::Direction::forward);
    num::TensorF theta = target_tensor(adapted);
    num::TensorF cond = condition_tensor(adapted);

    num::NoGradGuard guard;
    num::TensorF lr = nets::log_ratio(*classifier_, theta, cond);
    std::vector<double> out(static_cast<std::size_t>(lr.numel()));
    auto values = lr.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(values[i]);
    return out;
}

}  // namespace abi::approx
