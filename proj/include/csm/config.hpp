#pragma once

// Plain-text key=value run configuration, named learning-rate presets, and
// the long-run preset table with the published reference results annotated.

#include "csm/harness.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace csm {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    double v;
    while (in >> v) out.push_back(v);
    if (out.empty()) throw ConfigError("expected a list of numbers, got: " + s);
    return out;
}

inline std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    int v;
    while (in >> v) out.push_back(v);
    if (out.empty()) throw ConfigError("expected a list of integers, got: " + s);
    return out;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw ConfigError("expected a boolean, got: " + s);
}

}  // namespace detail

/// Per-layer learning-rate presets from the reference experiments. Lateral
/// rates are padded to the network depth with their last value (the top
/// layer's laterals are inert under the default coefficients); bias rates
/// default to the feedforward rates.
inline LearningRates rates_preset(const std::string& name) {
    auto make = [](std::vector<double> w, std::vector<double> l) {
        while (l.size() < w.size()) l.push_back(l.back());
        return LearningRates::make(w, l, w);
    };
    if (name == "mnist-1hl") return make({0.5, 0.375}, {0.01});
    if (name == "mnist-3hl") return make({0.5, 0.375, 0.281, 0.211}, {0.75, 0.562, 0.422});
    if (name == "ep-mnist-1hl-reg") return make({0.1, 0.05}, {0.01});
    if (name == "ep-mnist-1hl-pos") return make({0.5, 0.125}, {0.01});
    if (name == "ep-mnist-1hl-lateral") return make({0.5, 0.25}, {0.75});
    if (name == "ep-mnist-3hl") return make({0.128, 0.032, 0.008, 0.002}, {0.01});
    if (name == "ep-mnist-3hl-lateral")
        return make({0.128, 0.032, 0.008, 0.002}, {0.192, 0.048, 0.012});
    if (name == "cifar-fc-1hl") return make({0.059, 0.017}, {0.067});
    if (name == "cifar-fc-2hl") return make({0.018, 7.51e-4, 3.07e-5}, {0.063, 2.59e-3});
    if (name == "mnist-str-r4nps4") return make({0.5, 0.375}, {0.01});
    if (name == "mnist-str-r4nps16") return make({0.5, 0.25}, {0.75});
    if (name == "mnist-str-r4nps20") return make({0.664, 0.577}, {0.9});
    if (name == "mnist-str-r8nps80-crop") return make({0.664, 0.577}, {0.9});
    if (name == "cifar-str-1hl") return make({0.050, 0.0375}, {0.01});
    if (name == "cifar-str-2hl") return make({0.265, 0.073, 0.020}, {0.075, 0.020});
    throw ConfigError("unknown learning-rate preset: " + name);
}

/// Applies one key=value assignment to a config. Keys mirror the RunConfig
/// fields; lists are space-separated.
inline void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    const std::string v = detail::trim(value);
    if (key == "algorithm") cfg.algorithm = algorithm_from_string(v);
    else if (key == "layers") cfg.layers = detail::parse_ints(v);
    else if (key == "beta") cfg.beta = std::stod(v);
    else if (key == "gamma") cfg.gamma = std::stod(v);
    else if (key == "lateral_prefactor") cfg.lateral_prefactor = std::stod(v);
    else if (key == "output_lateral_on") cfg.output_lateral_on = detail::parse_bool(v);
    else if (key == "step") cfg.step = std::stod(v);
    else if (key == "tolerance") cfg.tolerance = std::stod(v);
    else if (key == "free_iters_first") cfg.free_iters_first = std::stoi(v);
    else if (key == "free_iters") cfg.free_iters = std::stoi(v);
    else if (key == "nudged_iters") cfg.nudged_iters = std::stoi(v);
    else if (key == "eval_iters") cfg.eval_iters = std::stoi(v);
    else if (key == "alpha_w") { cfg.rates.alpha_w = detail::parse_doubles(v); if (cfg.rates.alpha_b.empty()) cfg.rates.alpha_b = cfg.rates.alpha_w; }
    else if (key == "alpha_l") { cfg.rates.alpha_l = detail::parse_doubles(v); cfg.rates.alpha_l_base = cfg.rates.alpha_l; }
    else if (key == "alpha_b") cfg.rates.alpha_b = detail::parse_doubles(v);
    else if (key == "lr_preset") cfg.rates = rates_preset(v);
    else if (key == "adaptive_lr") cfg.adaptive_lr = detail::parse_bool(v);
    else if (key == "epochs") cfg.epochs = std::stoi(v);
    else if (key == "seed") cfg.seed = std::stoull(v);
    else if (key == "batch_size") cfg.batch_size = std::stoi(v);
    else if (key == "dataset") cfg.dataset = v;
    else if (key == "crop") cfg.crop = detail::parse_bool(v);
    else if (key == "subset_train") cfg.subset_train = std::stoi(v);
    else if (key == "subset_val") cfg.subset_val = std::stoi(v);
    else if (key == "data_dir") cfg.data_dir = v;
    else if (key == "out_dir") cfg.out_dir = v;
    else if (key == "structured") cfg.structured = v;
    else if (key == "run_name") cfg.run_name = v;
    else if (key == "divergence_abort_frac") cfg.divergence_abort_frac = std::stod(v);
    else if (key == "sparsity_threshold") cfg.sparsity_threshold = std::stod(v);
    else throw ConfigError("unknown config key: " + key);
}

/// Parses a key = value file ('#' starts a comment) on top of `base`.
inline RunConfig parse_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        apply_config_kv(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return base;
}

/// Dataset directory resolution: explicit config value, then CSM_DATA_DIR.
inline std::string resolve_data_dir(const RunConfig& cfg) {
    if (!cfg.data_dir.empty()) return cfg.data_dir;
    if (const char* env = std::getenv("CSM_DATA_DIR")) return env;
    throw ConfigError("no data directory: set data_dir or CSM_DATA_DIR");
}

inline Dataset load_dataset(const RunConfig& cfg) {
    const std::string dir = resolve_data_dir(cfg);
    Dataset ds = cfg.dataset == "cifar10" ? load_cifar10(dir) : load_mnist(dir, cfg.crop);
    if (cfg.subset_train > 0 || cfg.subset_val > 0) {
        const int nt = cfg.subset_train > 0 ? cfg.subset_train
                                            : static_cast<int>(ds.train_indices.size());
        const int nv = cfg.subset_val > 0 ? cfg.subset_val
                                          : static_cast<int>(ds.val_indices.size());
        ds = subset(ds, nt, nv, cfg.seed);
    }
    return ds;
}

struct PresetInfo {
    std::string name;
    RunConfig config;
    std::string expected;  // published reference result for the full run
};

/// Full-scale run presets. These reproduce the reference experiment setups;
/// the expected numbers are annotations for full runs (hours of relaxation),
/// not desk-scale assertions.
inline const std::vector<PresetInfo>& run_presets() {
    static const std::vector<PresetInfo> presets = [] {
        std::vector<PresetInfo> list;
        auto add = [&list](const std::string& name, AlgorithmKind alg, std::vector<int> layers,
                           const std::string& lr, int epochs, bool adaptive,
                           const std::string& dataset, const std::string& structured,
                           const std::string& expected) {
            PresetInfo p;
            p.name = name;
            p.config.run_name = name;
            p.config.algorithm = alg;
            p.config.layers = std::move(layers);
            p.config.rates = rates_preset(lr);
            p.config.epochs = epochs;
            p.config.adaptive_lr = adaptive;
            p.config.dataset = dataset;
            p.config.structured = structured;
            p.expected = expected;
            list.push_back(std::move(p));
        };
        using A = AlgorithmKind;
        add("mnist-1hl", A::csm, {784, 500, 10}, "mnist-1hl", 25, false, "mnist", "",
            "train 0.00% val 2.16% at 25 epochs");
        add("mnist-1hl-ep-reg", A::ep_beta_regularized, {784, 500, 10}, "ep-mnist-1hl-reg", 40,
            false, "mnist", "", "train 0% val 2.53% at 40 epochs");
        add("mnist-1hl-ep-pos", A::ep_beta_positive, {784, 500, 10}, "ep-mnist-1hl-pos", 100,
            false, "mnist", "", "train 0.034% val 2.18% at 100 epochs");
        add("mnist-1hl-ep-lateral", A::ep_lateral, {784, 500, 10}, "ep-mnist-1hl-lateral", 25,
            false, "mnist", "", "train 0% val 2.29% at 25 epochs");
        add("mnist-3hl", A::csm, {784, 500, 500, 500, 10}, "mnist-3hl", 250, true, "mnist", "",
            "train 0% val 3.52% at 250 epochs (adaptive lateral rates)");
        add("mnist-3hl-ep-pos", A::ep_beta_positive, {784, 500, 500, 500, 10}, "ep-mnist-3hl",
            250, false, "mnist", "", "train 0% val 2.77% at 250 epochs");
        add("mnist-str-r4nps4", A::csm, {}, "mnist-str-r4nps4", 50, false, "mnist", "4,4,2",
            "train 0.02% val 2.71% at 50 epochs");
        add("mnist-str-r4nps16", A::csm, {}, "mnist-str-r4nps16", 49, false, "mnist", "4,16,2",
            "train 0% val 2.41% at 49 epochs");
        add("mnist-str-r4nps20", A::csm, {}, "mnist-str-r4nps20", 50, false, "mnist", "4,20,2",
            "train 0% val 2.22% at 50 epochs");
        add("cifar-fc-1hl", A::csm, {3072, 500, 10}, "cifar-fc-1hl", 1000, false, "cifar10", "",
            "train 1.77% val 59.21% at 1000 epochs");
        add("cifar-fc-2hl", A::csm, {3072, 500, 500, 10}, "cifar-fc-2hl", 3584, false, "cifar10",
            "", "train 17.96% val 51.76% at 3584 epochs");
        add("cifar-str-1hl", A::csm, {}, "cifar-str-1hl", 250, false, "cifar10", "4,3,2",
            "train 34% val 49.5% at 250 epochs");
        add("cifar-str-2hl", A::csm, {}, "cifar-str-2hl", 200, false, "cifar10", "4,3,2;4,3,4",
            "train 46.8% val 51.4% at 200 epochs");
        return list;
    }();
    return presets;
}

inline const PresetInfo& find_preset(const std::string& name) {
    for (const PresetInfo& p : run_presets())
        if (p.name == name) return p;
    throw ConfigError("unknown preset: " + name);
}

}  // namespace csm
