#pragma once

// The training loop (nudged phase, then free phase, then the local update,
// with persistent-particle warm starts), evaluation, sparsity measurement,
// parameter sweeps, and per-epoch checkpoint/metrics output.

#include "csm/checkpoint.hpp"
#include "csm/data_io.hpp"
#include "csm/learning.hpp"
#include "csm/structured.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace csm {

struct RunConfig {
    AlgorithmKind algorithm = AlgorithmKind::csm;
    std::vector<int> layers;  // ignored when `structured` is set
    double beta = 1.0;
    double gamma = 1.0;
    double lateral_prefactor = 1.0;
    bool output_lateral_on = false;

    double step = 0.5;
    double tolerance = 1e-5;
    int free_iters_first = 100;  // no stored particle yet
    int free_iters = 20;         // warm-started
    int nudged_iters = 6;
    int eval_iters = 200;

    LearningRates rates;
    bool adaptive_lr = false;
    AdaptiveLRSchedule adaptive;

    int epochs = 25;
    std::uint64_t seed = 1;
    int batch_size = 1;

    std::string dataset = "mnist";  // mnist | cifar10
    bool crop = false;
    int subset_train = 0;  // 0 = full split
    int subset_val = 0;
    std::string data_dir;
    std::string out_dir;
    std::string structured;  // "radius,nps,stride;..." per hidden layer
    std::string run_name = "custom";

    double divergence_abort_frac = 0.1;
    double sparsity_threshold = 0.01;

    int input_side() const { return dataset == "cifar10" ? 32 : (crop ? 20 : 28); }
    int input_channels() const { return dataset == "cifar10" ? 3 : 1; }

    NetworkTopology topology() const {
        NetworkTopology topo;
        if (structured.empty()) {
            topo = NetworkTopology::make(layers, gamma, output_lateral_on);
        } else {
            topo = make_structured_topology(input_side(), parse_grid_specs(structured),
                                            kNumClasses, gamma, output_lateral_on,
                                            input_channels());
        }
        topo.lateral_prefactor = lateral_prefactor;
        topo.validate();
        return topo;
    }

    PhaseConfig nudged_phase() const { return {std::abs(beta), step, nudged_iters, tolerance}; }
    PhaseConfig free_phase_first() const { return {0.0, step, free_iters_first, tolerance}; }
    PhaseConfig free_phase_warm() const { return {0.0, step, free_iters, tolerance}; }
    PhaseConfig eval_phase() const { return {0.0, step, eval_iters, tolerance}; }

    void validate() const {
        topology();
        nudged_phase().validate();
        free_phase_first().validate();
        free_phase_warm().validate();
        eval_phase().validate();
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (beta == 0.0 && algorithm != AlgorithmKind::csm)
            throw ConfigError("EP variants need a nonzero beta");
        if (dataset != "mnist" && dataset != "cifar10")
            throw ConfigError("unknown dataset: " + dataset);
        if (divergence_abort_frac < 0.0 || divergence_abort_frac > 1.0)
            throw ConfigError("divergence_abort_frac must be in [0,1]");
    }
};

struct EvalResult {
    double error_pct = 0.0;
    long nonconverged = 0;
    long count = 0;
};

namespace detail {

inline int predict_class(const NetworkState& state) {
    int best = 0;
    state.r.back().maxCoeff(&best);
    return best;
}

// Deterministic parallel for: contiguous chunks, results combined in thread
// order.
template <typename Fn>
inline void parallel_chunks(std::size_t n, Fn&& fn) {
    unsigned threads = std::thread::hardware_concurrency();
    if (threads < 1) threads = 1;
    threads = std::min<unsigned>({threads, 4u, static_cast<unsigned>((n + 63) / 64)});
    if (threads <= 1 || n < 128) {
        fn(0, std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, t, begin, end] { fn(t, begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Free-phase classification error on the given indices: relax from the
/// midpoint state (no label, no nudge), predict the largest output rate.
/// Non-converged or diverged samples count as errors.
inline EvalResult evaluate(const Parameters& par, const NetworkTopology& topo,
                           const Dataset& data, const std::vector<int>& indices,
                           const PhaseConfig& phase) {
    if (phase.beta != 0.0) throw DomainError("evaluate runs the free phase; beta must be 0");
    phase.validate();
    par.check_shapes(topo);

    const std::size_t n = indices.size();
    std::vector<long> errors(8, 0), nonconv(8, 0);
    detail::parallel_chunks(n, [&](unsigned slot, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto idx = static_cast<std::size_t>(indices[k]);
            bool wrong = true;
            try {
                RelaxResult res =
                    relax(midpoint_state(topo, data.inputs[idx]), par, topo, phase, nullptr);
                if (res.converged) {
                    wrong = detail::predict_class(res.state) != data.label_of(idx);
                } else {
                    ++nonconv[slot];
                }
            } catch (const DivergenceError&) {
                ++nonconv[slot];
            }
            if (wrong) ++errors[slot];
        }
    });
    EvalResult out;
    out.count = static_cast<long>(n);
    for (long e : errors) out.error_pct += static_cast<double>(e);
    for (long c : nonconv) out.nonconverged += c;
    out.error_pct = n == 0 ? 0.0 : 100.0 * out.error_pct / static_cast<double>(n);
    return out;
}

/// Mean fraction of units with free-phase rate above `threshold`, per layer
/// 0..P (layer 0 is the input itself).
inline std::vector<double> sparsity(const Parameters& par, const NetworkTopology& topo,
                                    const Dataset& data, const std::vector<int>& indices,
                                    double threshold, const PhaseConfig& phase) {
    if (phase.beta != 0.0) throw DomainError("sparsity uses the free phase; beta must be 0");
    par.check_shapes(topo);
    const int P = topo.depth();
    const std::size_t n = indices.size();
    std::vector<std::vector<double>> partial(8, std::vector<double>(static_cast<std::size_t>(P) + 1, 0.0));
    detail::parallel_chunks(n, [&](unsigned slot, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto idx = static_cast<std::size_t>(indices[k]);
            RelaxResult res =
                relax(midpoint_state(topo, data.inputs[idx]), par, topo, phase, nullptr);
            for (int p = 0; p <= P; ++p) {
                const Vec& r = res.state.r[static_cast<std::size_t>(p)];
                partial[slot][static_cast<std::size_t>(p)] +=
                    static_cast<double>((r.array() > threshold).count()) /
                    static_cast<double>(r.size());
            }
        }
    });
    std::vector<double> out(static_cast<std::size_t>(P) + 1, 0.0);
    for (const auto& acc : partial)
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += acc[p];
    if (n > 0)
        for (double& v : out) v /= static_cast<double>(n);
    return out;
}

struct TrainHooks {
    // Called after each epoch; return false to stop early.
    std::function<bool(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    NetworkTopology topo;
    Parameters params;
    PersistentParticleStore store;
    std::vector<EpochMetrics> metrics;
    long diverged_total = 0;
};

/// Runs training per the two-phase scheme: per sample, warm-start from the
/// particle store, relax the nudged phase, relax the free phase from the
/// nudged fixed point, apply the selected local rule, and store the free
/// fixed point for the next epoch. Writes metrics.csv, checkpoint.bin and
/// summary.csv under out_dir when set. `resume` continues a saved run.
inline TrainResult train(const RunConfig& config, const Dataset& data,
                         const TrainHooks& hooks = {}, const TrainState* resume = nullptr) {
    config.validate();
    data.validate();
    const NetworkTopology topo = config.topology();
    if (data.input_dim() != topo.size(0))
        throw ShapeError("dataset dimension " + std::to_string(data.input_dim()) +
                         " != input layer size " + std::to_string(topo.size(0)));
    if (topo.size(topo.depth()) != kNumClasses)
        throw ShapeError("output layer must have one unit per class");
    const int P = topo.depth();
    const StructureMasks* masks = topo.masks.get();

    TrainResult result;
    result.topo = topo;
    int start_epoch = 0;
    if (resume) {
        resume->params.check_shapes(topo);
        result.params = resume->params;
        result.store = resume->store;
        result.metrics = resume->metrics;
        start_epoch = resume->next_epoch;
    } else {
        result.params = init_params(topo, config.seed);
        if (!uses_lateral(config.algorithm))
            for (Mat& l : result.params.l) l.setZero();
    }

    LearningRates base_rates = config.rates;
    base_rates.validate(P);
    const PhaseConfig nudged_cfg = config.nudged_phase();
    const PhaseConfig free_first = config.free_phase_first();
    const PhaseConfig free_warm = config.free_phase_warm();
    const PhaseConfig eval_cfg = config.eval_phase();

    namespace fs = std::filesystem;
    if (!config.out_dir.empty()) fs::create_directories(config.out_dir);

    UpdateAccumulator batch(topo);
    const std::size_t n_train = data.train_indices.size();
    if (n_train == 0) throw Error("train: empty training split");

    for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        LearningRates rates = base_rates;
        if (config.adaptive_lr && !result.metrics.empty())
            rates = apply_adaptive_lr(config.adaptive, result.metrics.back().train_err, base_rates);

        long miscl = 0, nonconv = 0, diverged = 0;
        double iter_sum = 0.0;
        std::vector<double> sparsity_sum(static_cast<std::size_t>(P), 0.0);
        long seen = 0;
        batch.reset();

        for (std::size_t k = 0; k < n_train; ++k) {
            const auto idx = static_cast<std::size_t>(data.train_indices[k]);
            const Vec& x = data.inputs[idx];
            const Vec& z = data.labels[idx];
            double beta_signed = config.beta;
            if (config.algorithm == AlgorithmKind::ep_beta_regularized)
                beta_signed *= ep_beta_sign(config.seed, epoch, static_cast<std::int64_t>(k));

            const bool warm = result.store.contains(static_cast<std::int64_t>(idx));
            RelaxResult nudged_res, free_res;
            try {
                NetworkState state =
                    persistent_init(result.store, static_cast<std::int64_t>(idx), topo, x);
                nudged_res = relax(std::move(state), result.params, topo, nudged_cfg,
                                   beta_signed, &z);
                free_res = relax(nudged_res.state, result.params, topo,
                                 warm ? free_warm : free_first, 0.0, nullptr);
            } catch (const DivergenceError&) {
                ++diverged;
                continue;
            }
            ++seen;
            if (!free_res.converged) ++nonconv;
            iter_sum += free_res.iterations;
            if (detail::predict_class(free_res.state) != data.label_of(idx)) ++miscl;
            for (int p = 1; p <= P; ++p) {
                const Vec& r = free_res.state.r[static_cast<std::size_t>(p)];
                sparsity_sum[static_cast<std::size_t>(p) - 1] +=
                    static_cast<double>((r.array() > config.sparsity_threshold).count()) /
                    static_cast<double>(r.size());
            }

            if (config.batch_size == 1) {
                if (config.algorithm == AlgorithmKind::csm)
                    apply_csm_update(result.params, topo, free_res.state, nudged_res.state,
                                     rates, masks);
                else
                    apply_ep_update(result.params, topo, config.algorithm, free_res.state,
                                    nudged_res.state, beta_signed, rates, masks);
            } else {
                batch.add(free_res.state, nudged_res.state,
                          config.algorithm == AlgorithmKind::csm ? 1.0 : 1.0 / beta_signed);
                if (batch.count() >= config.batch_size || k + 1 == n_train) {
                    if (config.algorithm == AlgorithmKind::csm)
                        batch.apply_csm(result.params, topo, rates, masks);
                    else
                        batch.apply_ep(result.params, topo, config.algorithm, rates, masks);
                    batch.reset();
                }
            }
            result.store.save(static_cast<std::int64_t>(idx), free_res.state, topo.act);
        }
        result.diverged_total += diverged;
        if (static_cast<double>(diverged) >
            config.divergence_abort_frac * static_cast<double>(n_train))
            throw Error("train: " + std::to_string(diverged) + " of " +
                        std::to_string(n_train) + " samples diverged in epoch " +
                        std::to_string(epoch));

        EpochMetrics m;
        m.epoch = epoch;
        m.train_err = seen > 0 ? 100.0 * static_cast<double>(miscl) / static_cast<double>(seen)
                               : 100.0;
        m.val_err = evaluate(result.params, topo, data, data.val_indices, eval_cfg).error_pct;
        m.free_iters_mean = seen > 0 ? iter_sum / static_cast<double>(seen) : 0.0;
        m.nonconv = nonconv + diverged;
        for (double s : sparsity_sum)
            m.sparsity.push_back(seen > 0 ? s / static_cast<double>(seen) : 0.0);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m.validate();
        result.metrics.push_back(m);

        if (!config.out_dir.empty()) {
            std::ofstream mcsv(fs::path(config.out_dir) / "metrics.csv");
            write_metrics_csv(mcsv, result.metrics);
            TrainState snap;
            snap.params = result.params;
            snap.store = result.store;
            snap.metrics = result.metrics;
            snap.next_epoch = epoch + 1;
            save_train_state((fs::path(config.out_dir) / "checkpoint.bin").string(), topo, snap);
        }
        if (hooks.on_epoch && !hooks.on_epoch(m)) break;
    }

    if (!config.out_dir.empty()) {
        save_params((fs::path(config.out_dir) / "params.bin").string(), topo, result.params);
        std::ofstream sum(fs::path(config.out_dir) / "summary.csv");
        sum << "name,algorithm,train_err,val_err,epochs\n";
        const EpochMetrics& last = result.metrics.back();
        sum << config.run_name << ',' << to_string(config.algorithm) << ','
            << detail::format_double(last.train_err) << ',' << detail::format_double(last.val_err)
            << ',' << (last.epoch + 1) << '\n';
    }
    return result;
}

/// Trains and evaluates the template config at each value of `beta` or
/// `gamma`, over `trials` seeds, and writes one CSV row per value with the
/// mean/min/max final validation error.
inline void sweep(const RunConfig& base, const std::string& param,
                  const std::vector<double>& values, int trials, const Dataset& data,
                  std::ostream& csv) {
    if (param != "beta" && param != "gamma") throw ConfigError("sweep param must be beta or gamma");
    if (trials < 1) throw ConfigError("sweep needs at least one trial");
    csv << "param,value,mean_val_err,min_val_err,max_val_err,trials\n";
    for (double value : values) {
        double sum = 0.0, lo = 1e300, hi = -1e300;
        for (int trial = 0; trial < trials; ++trial) {
            RunConfig cfg = base;
            cfg.out_dir.clear();
            cfg.seed = base.seed + static_cast<std::uint64_t>(trial);
            if (param == "beta")
                cfg.beta = value;
            else
                cfg.gamma = value;
            const TrainResult res = train(cfg, data);
            const double err = res.metrics.back().val_err;
            sum += err;
            lo = std::min(lo, err);
            hi = std::max(hi, err);
        }
        csv << param << ',' << detail::format_double(value) << ','
            << detail::format_double(sum / trials) << ',' << detail::format_double(lo) << ','
            << detail::format_double(hi) << ',' << trials << '\n';
    }
}

}  // namespace csm
