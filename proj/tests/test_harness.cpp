#include "csm/harness.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "csm/config.hpp"
#include "csm/synth_data.hpp"
#include "testutil.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace csm;

namespace {

// One shared digit corpus for the whole suite.
const Dataset& digits() {
    static const testutil::TmpDir dir("harness_digits");
    static const Dataset ds = [] {
        write_synthetic_mnist(dir.str(), 3000, 600, 11);
        return load_mnist(dir.str());
    }();
    return ds;
}

RunConfig small_config() {
    RunConfig cfg;
    cfg.layers = {784, 24, 10};
    cfg.rates = LearningRates::make({0.5, 0.375}, {0.01, 0.01}, {0.5, 0.375});
    cfg.epochs = 2;
    cfg.seed = 3;
    cfg.free_iters_first = 50;
    cfg.free_iters = 15;
    cfg.eval_iters = 80;
    return cfg;
}

std::string strip_seconds(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
    return out.str();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool params_equal(const Parameters& a, const Parameters& b) {
    for (int p = 1; p <= a.depth(); ++p)
        if (a.W(p) != b.W(p) || a.L(p) != b.L(p) || a.B(p) != b.B(p)) return false;
    return true;
}

}  // namespace

TEST_CASE("zero learning rates leave parameters bitwise unchanged", "[harness]") {
    Dataset sub = subset(digits(), 100, 50, 1);
    RunConfig cfg = small_config();
    cfg.rates = LearningRates::uniform(2, 0.0, 0.0, 0.0);
    cfg.epochs = 1;
    const Parameters before = init_params(cfg.topology(), cfg.seed);
    const TrainResult res = train(cfg, sub);
    CHECK(params_equal(res.params, before));
}

TEST_CASE("an untrained network sits at chance level", "[harness]") {
    Dataset sub = subset(digits(), 100, 400, 2);
    RunConfig cfg = small_config();
    const Parameters par = init_params(cfg.topology(), 99);
    EvalResult res = evaluate(par, cfg.topology(), sub, sub.val_indices, cfg.eval_phase());
    CHECK(res.error_pct >= 75.0);
    CHECK(res.error_pct <= 96.0);
    CHECK(res.count == 400);
}

TEST_CASE("training beats the chance baseline within two epochs", "[harness]") {
    Dataset sub = subset(digits(), 800, 200, 3);
    RunConfig cfg = small_config();
    const TrainResult res = train(cfg, sub);
    REQUIRE(res.metrics.size() == 2);
    CHECK(res.metrics[1].train_err < 70.0);
    CHECK(res.metrics[1].val_err < res.metrics[0].val_err + 5.0);
    // warm-started epochs need fewer free-phase iterations
    CHECK(res.metrics[1].free_iters_mean < res.metrics[0].free_iters_mean);
    for (const EpochMetrics& m : res.metrics) m.validate();
}

TEST_CASE("metrics CSV follows the pinned schema", "[harness]") {
    std::vector<EpochMetrics> rows(1);
    rows[0].epoch = 0;
    rows[0].sparsity = {0.5, 0.25};
    std::ostringstream os;
    write_metrics_csv(os, rows);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,train_err,val_err,free_iters_mean,nonconv,sparsity_l1,sparsity_l2,seconds");
}

TEST_CASE("identical runs produce identical metrics and parameters", "[harness]") {
    Dataset sub = subset(digits(), 300, 100, 4);
    testutil::TmpDir out_a("run_a"), out_b("run_b");
    RunConfig cfg = small_config();
    cfg.epochs = 2;
    RunConfig cfg_a = cfg, cfg_b = cfg;
    cfg_a.out_dir = out_a.str();
    cfg_b.out_dir = out_b.str();
    const TrainResult ra = train(cfg_a, sub);
    const TrainResult rb = train(cfg_b, sub);
    CHECK(params_equal(ra.params, rb.params));
    const std::string csv_a = slurp(out_a.path() / "metrics.csv");
    const std::string csv_b = slurp(out_b.path() / "metrics.csv");
    CHECK(strip_seconds(csv_a) == strip_seconds(csv_b));
    CHECK(slurp(out_a.path() / "summary.csv") == slurp(out_b.path() / "summary.csv"));
}

TEST_CASE("resumed training matches the uninterrupted run", "[harness]") {
    Dataset sub = subset(digits(), 250, 80, 5);
    RunConfig cfg = small_config();
    cfg.epochs = 4;

    testutil::TmpDir straight_dir("straight");
    RunConfig straight_cfg = cfg;
    straight_cfg.out_dir = straight_dir.str();
    const TrainResult straight = train(straight_cfg, sub);

    testutil::TmpDir part_dir("partial");
    RunConfig part_cfg = cfg;
    part_cfg.out_dir = part_dir.str();
    part_cfg.epochs = 2;
    train(part_cfg, sub);

    auto [topo, state] = load_train_state((part_dir.path() / "checkpoint.bin").string());
    require_topology_match(cfg.topology(), topo);
    CHECK(state.next_epoch == 2);
    RunConfig resume_cfg = cfg;
    resume_cfg.out_dir.clear();
    const TrainResult resumed = train(resume_cfg, sub, {}, &state);

    CHECK(params_equal(straight.params, resumed.params));
    REQUIRE(resumed.metrics.size() == straight.metrics.size());
    for (std::size_t k = 0; k < straight.metrics.size(); ++k) {
        CHECK(resumed.metrics[k].train_err == straight.metrics[k].train_err);
        CHECK(resumed.metrics[k].val_err == straight.metrics[k].val_err);
        CHECK(resumed.metrics[k].nonconv == straight.metrics[k].nonconv);
    }
}

TEST_CASE("resume applies to the beta-regularized variant too", "[harness]") {
    Dataset sub = subset(digits(), 150, 60, 6);
    RunConfig cfg = small_config();
    cfg.algorithm = AlgorithmKind::ep_beta_regularized;
    cfg.rates = rates_preset("ep-mnist-1hl-reg");
    cfg.epochs = 3;

    const TrainResult straight = train(cfg, sub);

    testutil::TmpDir part_dir("partial_reg");
    RunConfig part_cfg = cfg;
    part_cfg.out_dir = part_dir.str();
    part_cfg.epochs = 1;
    train(part_cfg, sub);
    auto [topo, state] = load_train_state((part_dir.path() / "checkpoint.bin").string());
    const TrainResult resumed = train(cfg, sub, {}, &state);
    CHECK(params_equal(straight.params, resumed.params));
}

TEST_CASE("parameter checkpoints round-trip bitwise", "[harness]") {
    testutil::TmpDir tmp("ckpt");
    NetworkTopology topo = NetworkTopology::make({12, 7, 10}, 0.9);
    Parameters par = init_params(topo, 31);
    const std::string path = (tmp.path() / "p.bin").string();
    save_params(path, topo, par);
    auto [topo2, par2] = load_params(path);
    require_topology_match(topo, topo2);
    CHECK(params_equal(par, par2));

    NetworkTopology other = NetworkTopology::make({12, 8, 10}, 0.9);
    CHECK_THROWS_AS(require_topology_match(other, topo2), CheckpointError);

    std::ofstream bad(tmp.path() / "bad.bin", std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS_AS(load_params((tmp.path() / "bad.bin").string()), CheckpointError);
}

TEST_CASE("EP variants keep laterals at zero; the lateral variant does not", "[harness]") {
    Dataset sub = subset(digits(), 120, 40, 7);
    for (AlgorithmKind kind : {AlgorithmKind::ep_beta_positive, AlgorithmKind::ep_beta_regularized}) {
        RunConfig cfg = small_config();
        cfg.algorithm = kind;
        cfg.rates = rates_preset(kind == AlgorithmKind::ep_beta_positive ? "ep-mnist-1hl-pos"
                                                                         : "ep-mnist-1hl-reg");
        cfg.epochs = 1;
        const TrainResult res = train(cfg, sub);
        CHECK(res.params.L(1) == Mat::Zero(24, 24));
        CHECK(res.params.L(2) == Mat::Zero(10, 10));
    }
    RunConfig cfg = small_config();
    cfg.algorithm = AlgorithmKind::ep_lateral;
    cfg.rates = rates_preset("ep-mnist-1hl-lateral");
    cfg.epochs = 1;
    const TrainResult res = train(cfg, sub);
    CHECK(res.params.L(1) != Mat::Identity(24, 24));
}

TEST_CASE("sparsity measurement: zero weights give silent hidden layers", "[harness]") {
    Dataset sub = subset(digits(), 60, 30, 8);
    RunConfig cfg = small_config();
    NetworkTopology topo = cfg.topology();
    Parameters par = init_params(topo, 1);
    for (Mat& w : par.w) w.setZero();
    for (Mat& l : par.l) l.setZero();
    std::vector<double> frac =
        sparsity(par, topo, sub, sub.val_indices, 0.01, cfg.eval_phase());
    REQUIRE(frac.size() == 3);
    CHECK(frac[1] == 0.0);
    CHECK(frac[2] == 0.0);
    // layer 0 reports the dataset's own active-pixel fraction
    CHECK(frac[0] > 0.05);
    CHECK(frac[0] < 0.9);

    double manual = 0.0;
    for (int idx : sub.val_indices)
        manual += static_cast<double>(
                      (sub.inputs[static_cast<std::size_t>(idx)].array() > 0.01).count()) /
                  784.0;
    manual /= static_cast<double>(sub.val_indices.size());
    CHECK(std::abs(frac[0] - manual) < 1e-12);
}

TEST_CASE("a beta sweep separates the failing and working regimes", "[harness]") {
    Dataset sub = subset(digits(), 400, 150, 9);
    RunConfig cfg = small_config();
    cfg.epochs = 3;
    std::ostringstream csv;
    sweep(cfg, "beta", {0.01, 1.0}, 1, sub, csv);

    std::istringstream in(csv.str());
    std::string header, row_weak, row_strong;
    std::getline(in, header);
    CHECK(header == "param,value,mean_val_err,min_val_err,max_val_err,trials");
    std::getline(in, row_weak);
    std::getline(in, row_strong);
    auto mean_of = [](const std::string& row) {
        std::stringstream ss(row);
        std::string field;
        std::getline(ss, field, ',');
        std::getline(ss, field, ',');
        std::getline(ss, field, ',');
        return std::stod(field);
    };
    const double weak = mean_of(row_weak);
    const double strong = mean_of(row_strong);
    CHECK(weak >= 60.0);   // vanishing nudge cannot train
    CHECK(strong <= 45.0);
    CHECK(row_weak.substr(0, 10) == std::string("beta,0.01,"));
}

TEST_CASE("config files, overrides, and environment fallback", "[harness]") {
    testutil::TmpDir tmp("cfg");
    {
        std::ofstream f(tmp.path() / "run.cfg");
        f << "# contrastive run\n"
          << "algorithm = ep-lateral\n"
          << "layers = 784 32 10\n"
          << "beta = 0.5\n"
          << "gamma = 0.9\n"
          << "alpha_w = 0.5 0.25\n"
          << "alpha_l = 0.75\n"
          << "epochs = 7\n"
          << "seed = 123\n"
          << "subset_train = 500\n"
          << "structured =\n";
    }
    RunConfig cfg = parse_config_file((tmp.path() / "run.cfg").string());
    CHECK(cfg.algorithm == AlgorithmKind::ep_lateral);
    CHECK(cfg.layers == std::vector<int>{784, 32, 10});
    CHECK(cfg.beta == 0.5);
    CHECK(cfg.gamma == 0.9);
    CHECK(cfg.epochs == 7);
    CHECK(cfg.seed == 123);
    CHECK(cfg.subset_train == 500);
    CHECK(cfg.rates.alpha_w == std::vector<double>{0.5, 0.25});
    CHECK(cfg.rates.alpha_b == cfg.rates.alpha_w);

    apply_config_kv(cfg, "epochs", "9");
    CHECK(cfg.epochs == 9);
    CHECK_THROWS_AS(apply_config_kv(cfg, "no_such_key", "1"), ConfigError);
    {
        std::ofstream f(tmp.path() / "bad.cfg");
        f << "epochs 9\n";
    }
    CHECK_THROWS_AS(parse_config_file((tmp.path() / "bad.cfg").string()), ConfigError);

    cfg.data_dir.clear();
    ::setenv("CSM_DATA_DIR", "/tmp/somewhere", 1);
    CHECK(resolve_data_dir(cfg) == "/tmp/somewhere");
    ::unsetenv("CSM_DATA_DIR");
    CHECK_THROWS_AS(resolve_data_dir(cfg), ConfigError);
    cfg.data_dir = "/explicit";
    CHECK(resolve_data_dir(cfg) == "/explicit");
}

TEST_CASE("run presets are well-formed", "[harness]") {
    const auto& presets = run_presets();
    CHECK(presets.size() >= 10);
    for (const PresetInfo& p : presets) {
        INFO(p.name);
        CHECK_FALSE(p.expected.empty());
        const NetworkTopology topo = p.config.topology();
        p.config.rates.validate(topo.depth());
        CHECK(topo.size(topo.depth()) == 10);
    }
    CHECK(find_preset("mnist-1hl").config.epochs == 25);
    CHECK_THROWS_AS(find_preset("nope"), ConfigError);
    CHECK_THROWS_AS(rates_preset("nope"), ConfigError);
}

TEST_CASE("dimension mismatches are typed errors", "[harness]") {
    Dataset sub = subset(digits(), 60, 30, 10);
    RunConfig cfg = small_config();
    cfg.layers = {100, 24, 10};
    CHECK_THROWS_AS(train(cfg, sub), ShapeError);
    cfg.layers = {784, 24, 9};
    CHECK_THROWS_AS(train(cfg, sub), ShapeError);
}

TEST_CASE("mini-batch mode trains comparably", "[harness]") {
    Dataset sub = subset(digits(), 300, 100, 12);
    RunConfig cfg = small_config();
    cfg.batch_size = 10;
    cfg.epochs = 2;
    const TrainResult res = train(cfg, sub);
    CHECK(res.metrics.back().train_err < 75.0);
}
