// Command-line interface: training runs, checkpoint evaluation, beta/gamma
// sweeps, the verification-oracle battery, the linear-network demo, synthetic
// data generation, and structure-mask export.

#include "csm/csm.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

struct TrainCli {
    std::string config_file;
    std::string preset;
    std::vector<std::string> overrides;  // key=value
    std::string algorithm, dataset, structured, out_dir, data_dir;
    int epochs = -1;
    long seed = -1;
    int subset_train = -1, subset_val = -1;
    double beta = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
};

csm::RunConfig build_config(const TrainCli& cli) {
    csm::RunConfig cfg;
    if (!cli.preset.empty()) cfg = csm::find_preset(cli.preset).config;
    if (!cli.config_file.empty()) cfg = csm::parse_config_file(cli.config_file, cfg);
    auto set = [&cfg](const std::string& key, const std::string& value) {
        csm::apply_config_kv(cfg, key, value);
    };
    if (!cli.algorithm.empty()) set("algorithm", cli.algorithm);
    if (!cli.dataset.empty()) set("dataset", cli.dataset);
    if (!cli.structured.empty()) set("structured", cli.structured);
    if (!cli.out_dir.empty()) set("out_dir", cli.out_dir);
    if (!cli.data_dir.empty()) set("data_dir", cli.data_dir);
    if (cli.epochs >= 0) cfg.epochs = cli.epochs;
    if (cli.seed >= 0) cfg.seed = static_cast<std::uint64_t>(cli.seed);
    if (cli.subset_train >= 0) cfg.subset_train = cli.subset_train;
    if (cli.subset_val >= 0) cfg.subset_val = cli.subset_val;
    if (!std::isnan(cli.beta)) cfg.beta = cli.beta;
    if (!std::isnan(cli.gamma)) cfg.gamma = cli.gamma;
    for (const std::string& kv : cli.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw csm::ConfigError("--set expects key=value, got " + kv);
        set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

int run_train(const TrainCli& cli, bool resume) {
    csm::RunConfig cfg = build_config(cli);
    cfg.validate();
    const csm::Dataset data = csm::load_dataset(cfg);
    std::cout << "dataset: " << data.size() << " samples (" << data.train_indices.size()
              << " train / " << data.val_indices.size() << " val), checksum " << std::hex
              << data.checksum << std::dec << "\n";

    csm::TrainHooks hooks;
    hooks.on_epoch = [](const csm::EpochMetrics& m) {
        std::cout << "epoch " << m.epoch << ": train " << m.train_err << "% val " << m.val_err
                  << "% free-iters " << m.free_iters_mean << " nonconv " << m.nonconv << " ("
                  << m.seconds << "s)\n";
        return true;
    };

    csm::TrainResult result;
    if (resume) {
        const std::string path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
        auto [topo, state] = csm::load_train_state(path);
        csm::require_topology_match(cfg.topology(), topo);
        std::cout << "resuming from " << path << " at epoch " << state.next_epoch << "\n";
        result = csm::train(cfg, data, hooks, &state);
    } else {
        result = csm::train(cfg, data, hooks);
    }
    const csm::EpochMetrics& last = result.metrics.back();
    std::cout << cfg.run_name << ": train " << last.train_err << "% val " << last.val_err
              << "% after " << (last.epoch + 1) << " epochs\n";
    if (!cfg.out_dir.empty()) std::cout << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint, const TrainCli& cli) {
    csm::RunConfig cfg = build_config(cli);
    auto [topo, params] = csm::load_params(checkpoint);
    cfg.layers = topo.layer_sizes;  // dataset checks still apply
    const csm::Dataset data = csm::load_dataset(cfg);
    if (data.input_dim() != topo.size(0))
        throw csm::ShapeError("checkpoint expects input dimension " +
                              std::to_string(topo.size(0)));
    const csm::EvalResult res =
        csm::evaluate(params, topo, data, data.val_indices, cfg.eval_phase());
    std::cout << "validation error: " << res.error_pct << "% over " << res.count << " samples ("
              << res.nonconverged << " non-converged)\n";
    return 0;
}

int run_sweep(const TrainCli& cli, const std::string& param, const std::vector<double>& values,
              int trials, const std::string& out_csv) {
    csm::RunConfig cfg = build_config(cli);
    cfg.validate();
    const csm::Dataset data = csm::load_dataset(cfg);
    if (out_csv.empty()) {
        csm::sweep(cfg, param, values, trials, data, std::cout);
    } else {
        std::ofstream out(out_csv);
        if (!out) throw csm::IoError("cannot write " + out_csv);
        csm::sweep(cfg, param, values, trials, data, out);
        std::cout << "sweep table written to " << out_csv << "\n";
    }
    return 0;
}

int run_verify(std::uint64_t seed, const std::string& csv_path) {
    const std::vector<csm::verify::OracleReport> reports = csm::verify::run_oracle_battery(seed);
    int failures = 0;
    for (const auto& r : reports) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  measured " << r.measured
                  << " tol " << r.tolerance << (r.inconclusive ? "  (inconclusive)" : "") << "  ["
                  << r.instance << "]\n";
        if (!r.pass) ++failures;
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        csm::verify::write_reports_csv(out, reports);
    }
    return failures == 0 ? 0 : 1;
}

int run_linear_demo(std::uint64_t seed, long steps, double eta, double noise,
                    const std::string& out_dir) {
    const csm::LinearDemoResult res = csm::run_linear_demo(seed, steps, eta, noise);
    std::cout << "test MSE " << res.mse_initial << " -> " << res.mse_final << " (x"
              << res.mse_initial / res.mse_final << " reduction), correlation "
              << res.correlation << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream mse(fs::path(out_dir) / "mse.csv");
        mse << "step,test_mse\n";
        for (const auto& [step, v] : res.mse_curve) mse << step << ',' << v << '\n';
        std::ofstream scatter(fs::path(out_dir) / "scatter.csv");
        scatter << "predicted,desired\n";
        for (const auto& [p, d] : res.scatter) scatter << p << ',' << d << '\n';
        std::cout << "curves written to " << out_dir << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hebbian/anti-Hebbian contrastive similarity matching networks"};
    app.require_subcommand(1);

    TrainCli cli;
    auto add_common = [&cli](CLI::App* cmd) {
        cmd->add_option("--config", cli.config_file, "key = value config file");
        cmd->add_option("--preset", cli.preset, "named run preset (see `presets`)");
        cmd->add_option("--algorithm", cli.algorithm, "csm|ep-pos|ep-reg|ep-lateral");
        cmd->add_option("--dataset", cli.dataset, "mnist|cifar10");
        cmd->add_option("--epochs", cli.epochs, "epoch count");
        cmd->add_option("--seed", cli.seed, "run seed");
        cmd->add_option("--subset-train", cli.subset_train, "stratified training subset size");
        cmd->add_option("--subset-val", cli.subset_val, "stratified validation subset size");
        cmd->add_option("--structured", cli.structured,
                        "grid spec per hidden layer: radius,nps,stride;...");
        cmd->add_option("--beta", cli.beta, "nudge strength");
        cmd->add_option("--gamma", cli.gamma, "feedback strength");
        cmd->add_option("--out", cli.out_dir, "output directory");
        cmd->add_option("--data-dir", cli.data_dir, "dataset directory (else CSM_DATA_DIR)");
        cmd->add_option("--set", cli.overrides, "extra key=value overrides")->take_all();
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a network");
    add_common(train_cmd);
    bool resume = false;
    train_cmd->add_flag("--resume", resume, "continue from <out>/checkpoint.bin");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string checkpoint;
    eval_cmd->add_option("--checkpoint", checkpoint, "parameter checkpoint")->required();
    add_common(eval_cmd);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "beta/gamma sweep");
    std::string sweep_param, sweep_out;
    std::vector<double> sweep_values;
    int trials = 1;
    sweep_cmd->add_option("--param", sweep_param, "beta|gamma")->required();
    sweep_cmd->add_option("--values", sweep_values, "values to sweep")->required()->take_all();
    sweep_cmd->add_option("--trials", trials, "trials (seeds) per value");
    sweep_cmd->add_option("--out-csv", sweep_out, "CSV output path");
    add_common(sweep_cmd);

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the oracle battery");
    std::uint64_t verify_seed = 12345;
    std::string verify_csv;
    verify_cmd->add_option("--seed", verify_seed, "battery seed");
    verify_cmd->add_option("--csv", verify_csv, "write the report table as CSV");

    CLI::App* demo_cmd = app.add_subcommand("linear-demo", "linear network on z = Ax");
    std::uint64_t demo_seed = 7;
    long demo_steps = 20000;
    double demo_eta = 0.01, demo_noise = 0.0;
    std::string demo_out;
    demo_cmd->add_option("--seed", demo_seed, "demo seed");
    demo_cmd->add_option("--steps", demo_steps, "training steps");
    demo_cmd->add_option("--eta", demo_eta, "learning rate");
    demo_cmd->add_option("--noise", demo_noise, "input noise sigma");
    demo_cmd->add_option("--out", demo_out, "directory for mse.csv / scatter.csv");

    CLI::App* data_cmd = app.add_subcommand("make-data", "write a synthetic dataset");
    std::string data_out, data_kind = "mnist";
    int train_count = 60000, test_count = 10000;
    std::uint64_t data_seed = 1;
    data_cmd->add_option("--out", data_out, "output directory")->required();
    data_cmd->add_option("--dataset", data_kind, "mnist|cifar10");
    data_cmd->add_option("--train-count", train_count, "training images (per batch for cifar10)");
    data_cmd->add_option("--test-count", test_count, "test images");
    data_cmd->add_option("--seed", data_seed, "generator seed");

    CLI::App* masks_cmd = app.add_subcommand("masks", "export structure masks as COO text");
    std::string masks_spec, masks_out;
    int masks_side = 28, masks_channels = 1;
    masks_cmd->add_option("--structured", masks_spec, "radius,nps,stride;...")->required();
    masks_cmd->add_option("--input-side", masks_side, "input grid side");
    masks_cmd->add_option("--input-channels", masks_channels, "input channel planes");
    masks_cmd->add_option("--out", masks_out, "output path (default stdout)");

    CLI::App* presets_cmd = app.add_subcommand("presets", "list run presets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return run_train(cli, resume);
        if (eval_cmd->parsed()) return run_eval(checkpoint, cli);
        if (sweep_cmd->parsed()) return run_sweep(cli, sweep_param, sweep_values, trials, sweep_out);
        if (verify_cmd->parsed()) return run_verify(verify_seed, verify_csv);
        if (demo_cmd->parsed())
            return run_linear_demo(demo_seed, demo_steps, demo_eta, demo_noise, demo_out);
        if (data_cmd->parsed()) {
            if (data_kind == "mnist")
                csm::write_synthetic_mnist(data_out, train_count, test_count, data_seed);
            else if (data_kind == "cifar10")
                csm::write_synthetic_cifar10(data_out, train_count, test_count, data_seed);
            else
                throw csm::ConfigError("unknown dataset kind: " + data_kind);
            std::cout << "synthetic " << data_kind << " written to " << data_out << "\n";
            return 0;
        }
        if (masks_cmd->parsed()) {
            const csm::StructureMasks masks =
                csm::build_grid_masks(masks_side, csm::parse_grid_specs(masks_spec), masks_channels);
            if (masks_out.empty()) {
                csm::write_masks_coo(std::cout, masks);
            } else {
                std::ofstream out(masks_out);
                csm::write_masks_coo(out, masks);
                std::cout << "masks written to " << masks_out << "\n";
            }
            return 0;
        }
        if (presets_cmd->parsed()) {
            for (const csm::PresetInfo& p : csm::run_presets())
                std::cout << p.name << "  [" << csm::to_string(p.config.algorithm) << ", "
                          << p.config.dataset << "]  expected: " << p.expected << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
