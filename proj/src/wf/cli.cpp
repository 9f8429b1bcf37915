#include "abi/wf/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "abi/sim/simulator.hpp"
#include "abi/wf/container.hpp"
#include "abi/wf/workflow.hpp"

namespace abi::wf {

namespace {

sim::NamedBatch load_batch(const std::string& path) { return get_batch(ArrayContainer::load(path)); }

void save_batch(const std::string& path, const sim::NamedBatch& batch) {
    ArrayContainer container;
    put_batch(container, batch);
    container.save(path);
}

struct CliArgs {
    std::string config, ckpt, data, test, out, outdir, mode;
    std::int64_t n = 0, num_samples = 0;
    int workers = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

Workflow load_workflow(const CliArgs& a) {
    Workflow wf = Workflow::from_file(a.config);
    if (a.seed_given) wf.override_seed(a.seed);
    return wf;
}

int cmd_simulate(const CliArgs& a, std::ostream& out) {
    const Workflow wf = load_workflow(a);
    const sim::SimulatorSpec spec = wf.simulator();
    num::RngStream rng(wf.seed(), 0x51);
    const sim::NamedBatch batch =
        a.workers > 1 ? sim::sample_parallel(spec, a.n, rng, a.workers) : sim::sample(spec, a.n, rng);
    save_batch(a.out, batch);
    out << "simulated " << a.n << " draws -> " << a.out << "\n";
    return 0;
}

int cmd_train(const CliArgs& a, std::ostream& out) {
    const Workflow wf = load_workflow(a);
    const FitMode mode = a.mode == "online" ? FitMode::online : FitMode::offline;
    std::optional<sim::NamedBatch> data;
    if (!a.data.empty()) data = load_batch(a.data);
    const approx::EstimatorBundle bundle = workflow_fit(wf, mode, data, a.out);
    const approx::History& history = bundle.history();
    out << "trained " << history.train.size() << " epochs";
    if (!history.train.empty()) {
        char buffer[32];
        std::snprintf(buffer, sizeof(buffer), "%.6g", history.train.back());
        out << ", final loss " << buffer;
    }
    out << " -> " << a.out << "\n";
    return 0;
}

int cmd_sample(const CliArgs& a, std::ostream& out) {
    LoadedCheckpoint loaded = load_checkpoint(a.ckpt);
    if (a.seed_given) loaded.workflow.override_seed(a.seed);
    const sim::NamedBatch data = load_batch(a.data);
    num::RngStream rng(loaded.workflow.seed(), 0x5A);
    save_batch(a.out, loaded.bundle.sample(data, a.num_samples, rng));
    out << "sampled " << a.num_samples << " draws for " << data.batch_size() << " datasets -> " << a.out << "\n";
    return 0;
}

int cmd_estimate(const CliArgs& a, std::ostream& out) {
    const LoadedCheckpoint loaded = load_checkpoint(a.ckpt);
    const sim::NamedBatch data = load_batch(a.data);
    const auto estimates = loaded.bundle.estimate(data);

    sim::NamedBatch flat(data.batch_size());
    for (const auto& [name, estimate] : estimates) {
        flat.set(name + "/mean", estimate.mean);
        flat.set(name + "/quantiles", estimate.quantiles);
    }
    ArrayContainer container;
    put_batch(container, flat);
    container.put_json("levels", nlohmann::json(loaded.bundle.config().point.quantile_levels).dump());
    container.save(a.out);
    out << "estimated " << estimates.size() << " variables for " << data.batch_size() << " datasets -> " << a.out
        << "\n";
    return 0;
}

int cmd_diagnose(const CliArgs& a, std::ostream& out) {
    const LoadedCheckpoint loaded = load_checkpoint(a.ckpt);
    Workflow wf = loaded.workflow;
    if (a.seed_given) wf.override_seed(a.seed);
    const sim::NamedBatch test = load_batch(a.test);

    std::filesystem::create_directories(a.outdir);
    const WorkflowDiagnostics diagnostics = compute_default_diagnostics(wf, loaded.bundle, test);
    const std::string csv_path = (std::filesystem::path(a.outdir) / "metrics.csv").string();
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("diagnose: cannot write '" + csv_path + "'");
    csv << diagnostics.csv;
    csv.close();

    const std::vector<std::string> plots = plot_default_diagnostics(wf, loaded.bundle, test, a.outdir);
    out << "wrote " << csv_path << "\n";
    for (const std::string& p : plots) out << "wrote " << p << "\n";
    return 0;
}

int cmd_compare(const CliArgs& a, std::ostream& out) {
    const Workflow wf = load_workflow(a);
    if (wf.estimator_config().kind != approx::EstimatorKind::model_comparison)
        throw std::invalid_argument("compare: config.networks.kind must be \"model_comparison\"");
    const approx::EstimatorBundle bundle = workflow_fit(wf, FitMode::online);
    const sim::NamedBatch test = load_batch(a.test);
    const num::Array probabilities = bundle.classify(test);

    const std::int64_t datasets = probabilities.extent(0);
    const std::int64_t classes = probabilities.extent(1);
    const std::vector<double> values = probabilities.to_doubles();
    std::ofstream csv(a.out, std::ios::binary);
    if (!csv) throw std::runtime_error("compare: cannot write '" + a.out + "'");
    csv << "dataset";
    for (std::int64_t c = 0; c < classes; ++c) csv << ",prob_model_" << c;
    csv << "\n";
    char buffer[32];
    for (std::int64_t d = 0; d < datasets; ++d) {
        csv << d;
        for (std::int64_t c = 0; c < classes; ++c) {
            std::snprintf(buffer, sizeof(buffer), "%.10g", values[static_cast<std::size_t>(d * classes + c)]);
            csv << "," << buffer;
        }
        csv << "\n";
    }
    out << "compared " << classes << " models on " << datasets << " datasets -> " << a.out << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"amortized Bayesian inference workflows"};
    app.name("abi");
    CliArgs a;
    auto* seed_opt = app.add_option("--seed", a.seed, "override the config seed");

    CLI::App* simulate = app.add_subcommand("simulate", "draw a batch from the configured model");
    simulate->add_option("--config", a.config, "workflow config (JSON)")->required();
    simulate->add_option("--n", a.n, "number of draws")->required()->check(CLI::PositiveNumber);
    simulate->add_option("--out", a.out, "output batch file")->required();
    simulate->add_option("--workers", a.workers, "simulation threads")->check(CLI::PositiveNumber);

    CLI::App* train = app.add_subcommand("train", "fit the configured networks");
    train->add_option("--config", a.config, "workflow config (JSON)")->required();
    train->add_option("--mode", a.mode, "online or offline")
        ->required()
        ->check(CLI::IsMember({"online", "offline"}));
    train->add_option("--data", a.data, "training batch file (offline mode)");
    train->add_option("--out", a.out, "checkpoint to write")->required();

    CLI::App* sample = app.add_subcommand("sample", "draw from a trained posterior");
    sample->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
    sample->add_option("--data", a.data, "batch of observed datasets")->required();
    sample->add_option("--num-samples", a.num_samples, "draws per dataset")->required()->check(CLI::PositiveNumber);
    sample->add_option("--out", a.out, "output batch file")->required();

    CLI::App* estimate = app.add_subcommand("estimate", "point estimates from a trained head");
    estimate->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
    estimate->add_option("--data", a.data, "batch of observed datasets")->required();
    estimate->add_option("--out", a.out, "output container")->required();

    CLI::App* diagnose = app.add_subcommand("diagnose", "metric table and plots on labeled test data");
    diagnose->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
    diagnose->add_option("--test", a.test, "test batch with ground truth")->required();
    diagnose->add_option("--outdir", a.outdir, "directory for metrics.csv and plots")->required();

    CLI::App* compare = app.add_subcommand("compare", "train a model comparison head and classify test data");
    compare->add_option("--config", a.config, "workflow config (JSON)")->required();
    compare->add_option("--test", a.test, "batch of datasets to classify")->required();
    compare->add_option("--out", a.out, "output CSV")->required();

    for (CLI::App* sub : {simulate, train, sample, estimate, diagnose, compare}) sub->fallthrough();
    app.require_subcommand(0, 1);

    std::vector<std::string> argv_store;
    argv_store.push_back("abi");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(argv_store.size());
    for (const std::string& s : argv_store) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        a.seed_given = seed_opt->count() > 0;
        if (simulate->parsed()) return cmd_simulate(a, out);
        if (train->parsed()) {
            if (a.mode == "offline" && a.data.empty())
                throw std::invalid_argument("train: offline mode needs --data");
            if (a.mode == "online" && !a.data.empty())
                throw std::invalid_argument("train: online mode takes no --data");
            return cmd_train(a, out);
        }
        if (sample->parsed()) return cmd_sample(a, out);
        if (estimate->parsed()) return cmd_estimate(a, out);
        if (diagnose->parsed()) return cmd_diagnose(a, out);
        if (compare->parsed()) return cmd_compare(a, out);
        err << app.help();
        return 1;
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace abi::wf
