#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "allnc/csv.hpp"
#include "allnc/errors.hpp"
#include "allnc/harness.hpp"
#include "allnc/losses.hpp"

using namespace allnc;
namespace fs = std::filesystem;

namespace {

harness::TrainConfig tiny(harness::Mode mode = harness::Mode::allnc) {
    harness::TrainConfig c;
    c.mode = mode;
    c.long_tail.n_max = 40;
    c.long_tail.beta = 10.0;
    c.test_per_class = 10;
    c.dims.hidden = {24};
    c.dims.feature = 8;
    c.dims.projection = 8;
    c.batch_size = 32;
    c.loss.t_max = 4;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("allnc_harness_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config text parsing") {
    const auto c = harness::parse_config(
        "# comment\n"
        "mode = ce\n"
        "seed = 7   # trailing\n"
        "\n"
        "beta = 20\n"
        "hidden_dims = 32,16\n"
        "freeze_bias = true\n"
        "gamma = 0.5\n");
    CHECK(c.mode == harness::Mode::ce);
    CHECK(c.seed == 7);
    CHECK(c.long_tail.beta == 20.0);
    CHECK(c.dims.hidden == std::vector<std::size_t>{32, 16});
    CHECK(c.freeze_bias);
    CHECK(c.loss.gamma == 0.5);

    const auto back = harness::parse_config(c.to_text());
    CHECK(back.to_text() == c.to_text());

    try {
        harness::parse_config("seed = 1\nlearnin_rate = 0.1\n");
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("learnin_rate") != std::string::npos);
    }
    CHECK_THROWS_AS(harness::parse_config("epochs = -3\n"), ConfigError);
    CHECK_THROWS_AS(harness::parse_config("alpha = fast\n"), ConfigError);
    CHECK_THROWS_AS(harness::parse_config("mode = bbn\n"), ConfigError);
    CHECK_THROWS_AS(harness::parse_config("just words\n"), ConfigError);
    CHECK_THROWS_AS(harness::parse_config("fixed_eta = 1.5\n"), ConfigError);
    CHECK(harness::parse_mode("ce-baseline") == harness::Mode::ce);
}

TEST_CASE("shot groups") {
    const auto t = harness::GroupThresholds::scaled(500);
    CHECK(t.many_above == 100.0);
    CHECK(t.few_at_most == 20.0);
    const std::vector<std::size_t> counts{500, 300, 180, 108, 65, 39, 23, 14, 8, 5};
    const auto g = harness::assign_groups(counts, t);
    using G = harness::ShotGroup;
    CHECK(g == std::vector<G>{G::many, G::many, G::many, G::many, G::medium, G::medium, G::medium, G::few, G::few,
                              G::few});
    CHECK(harness::assign_groups({100, 101, 20, 21}, t) == std::vector<G>{G::medium, G::many, G::few, G::medium});
}

TEST_CASE("evaluate: perfect and chance classifiers") {
    model::NetworkDims d;
    d.input = 4;
    d.hidden = {};
    d.feature = 4;
    d.projection = 2;
    d.classes = 4;
    auto p = model::init_params(d, 1);
    p.get("encoder.0.weight") = Tensor::identity(4);
    p.get("classifier.weight") = Tensor::identity(4);
    data::Dataset test;
    test.classes = 4;
    test.x = Tensor::matrix(8, 4);
    for (std::size_t i = 0; i < 8; ++i) {
        test.labels.push_back(i % 4);
        test.x(i, i % 4) = 5.0;
    }
    const std::vector<std::size_t> counts{500, 60, 20, 10};
    const auto e = harness::evaluate(p, test, counts, harness::GroupThresholds::scaled(500));
    CHECK(e.accuracy.all == 1.0);
    CHECK(e.accuracy.many == 1.0);
    CHECK(e.accuracy.medium == 1.0);
    CHECK(e.accuracy.few == 1.0);

    // Labels independent of the inputs.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    model::NetworkDims d10 = d;
    d10.input = 10;
    d10.feature = 10;
    d10.classes = 10;
    const auto r = model::init_params(d10, 4);
    data::Dataset noise;
    noise.classes = 10;
    noise.x = Tensor::matrix(10000, 10);
    for (auto& v : noise.x.data()) v = g(rng);
    for (std::size_t i = 0; i < 10000; ++i) noise.labels.push_back(i % 10);
    const std::vector<std::size_t> flat(10, 500);
    const auto ch = harness::evaluate(r, noise, flat, harness::GroupThresholds::scaled(500));
    CHECK(std::abs(ch.accuracy.all - 0.1) < 0.02);
    CHECK(std::isnan(ch.accuracy.few));
}

TEST_CASE("training logs: schedule, additivity, row count") {
    const auto cfg = tiny();
    const auto run = harness::run_train(cfg);
    REQUIRE_FALSE(run.diverged);
    REQUIRE(run.epochs.size() == 4);
    for (const auto& e : run.epochs) {
        CHECK(e.eta == 1.0 - std::pow(static_cast<double>(e.epoch) / 4.0, 2.0));
        const auto& l = e.loss;
        CHECK(std::abs(l.total - (l.branch1 + l.branch2 + cfg.loss.alpha * (l.hycon + l.p2p_mu))) < 1e-10);
        CHECK(l.hycon < 0.0);
        CHECK(l.predictor_grad_norm > 0.0);
    }
    CHECK(run.epochs.back().eta == 0.0);

    const auto dir = scratch("emit");
    harness::emit_outputs(run, dir);
    for (const char* f : {"config.resolved", "epochs.csv", "report.json", "features.csv", "weights.csv", "icpa_mu.csv",
                          "icpa_w.csv", "params/manifest.txt"})
        CHECK(fs::exists(dir / f));
    const auto table = io::read_csv(dir / "epochs.csv");
    CHECK(table.rows.size() == 4);
    std::ifstream in(dir / "epochs.csv");
    std::string head;
    std::getline(in, head);
    CHECK(head == harness::epochs_csv_header());
    CHECK(harness::parse_config(slurp(dir / "config.resolved")).to_text() == cfg.to_text());

    // Exported snapshot reproduces the report through the metrics path.
    const auto feats = io::read_csv(dir / "features.csv");
    const auto wts = io::read_csv(dir / "weights.csv");
    const std::size_t d = feats.rows[0].size() - 1;
    Tensor f = Tensor::matrix(feats.rows.size(), d);
    std::vector<std::size_t> lab;
    for (std::size_t i = 0; i < feats.rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) f(i, j) = feats.rows[i][j];
        lab.push_back(static_cast<std::size_t>(feats.rows[i][d]) - 1);
    }
    Tensor w = Tensor::matrix(wts.rows.size(), d);
    std::vector<double> b;
    for (std::size_t c = 0; c < wts.rows.size(); ++c) {
        for (std::size_t j = 0; j < d; ++j) w(c, j) = wts.rows[c][j];
        b.push_back(wts.rows[c][d]);
    }
    const auto rep = nc::compute_report(f, lab, w, b, wts.rows.size());
    CHECK(std::abs(rep.nc1 - run.final_report.nc1) < 1e-9);
    CHECK(std::abs(rep.std_cos_mu - run.final_report.std_cos_mu) < 1e-9);
    CHECK(std::abs(rep.std_cos_w - run.final_report.std_cos_w) < 1e-9);
    CHECK(std::abs(rep.delta - run.final_report.delta) < 1e-9);
    CHECK(std::abs(rep.ncc_agreement - run.final_report.ncc_agreement) < 1e-9);
    fs::remove_all(dir);
}

TEST_CASE("identical configs give byte-identical logs") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    harness::emit_outputs(harness::run_train(tiny()), a);
    harness::emit_outputs(harness::run_train(tiny()), b);
    CHECK(slurp(a / "epochs.csv") == slurp(b / "epochs.csv"));
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "features.csv") == slurp(b / "features.csv"));
    auto other = tiny();
    other.seed = 2;
    const auto c = scratch("det_c");
    harness::emit_outputs(harness::run_train(other), c);
    CHECK(slurp(a / "epochs.csv") != slurp(c / "epochs.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
}

TEST_CASE("modes and ablations") {
    const auto ce = harness::run_train(tiny(harness::Mode::ce));
    for (const auto& e : ce.epochs) {
        CHECK(e.eta == 1.0);
        CHECK(e.loss.hycon == 0.0);
        CHECK(e.loss.p2p_mu == 0.0);
        CHECK(e.loss.predictor_grad_norm == 0.0);
    }

    auto abl = tiny(harness::Mode::ablation);
    abl.use_hycon = false;
    abl.use_gbbn = false;
    abl.fixed_eta = 0.25;
    const auto r = harness::run_train(abl);
    for (const auto& e : r.epochs) {
        CHECK(e.eta == 0.25);
        CHECK(e.loss.hycon == 0.0);
        CHECK(e.loss.p2p_mu > 0.0);
        CHECK(e.loss.predictor_grad_norm == 0.0);
    }

    auto zero = tiny();
    zero.loss.alpha = 0.0;
    for (const auto& e : harness::run_train(zero).epochs) CHECK(e.loss.predictor_grad_norm == 0.0);
}

TEST_CASE("sweep writes one row per value") {
    const auto dir = scratch("sweep");
    const auto rows = harness::sweep(tiny(), harness::SweepParam::gamma, {0.5, 2.0}, dir);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ok);
    CHECK(rows[1].ok);
    CHECK(rows[0].value == 0.5);
    std::istringstream lines(slurp(dir / "sweep.csv"));
    std::string line;
    std::vector<std::string> all;
    while (std::getline(lines, line)) all.push_back(line);
    REQUIRE(all.size() == 3);
    CHECK(all[0].rfind("param,value,status,acc_many", 0) == 0);
    CHECK(all[1].rfind("gamma,0.5,ok,", 0) == 0);
    CHECK(fs::exists(dir / "gamma_0.5" / "epochs.csv"));
    const auto bad = harness::sweep(tiny(), harness::SweepParam::beta, {0.5, 10.0});
    CHECK_FALSE(bad[0].ok);
    CHECK(bad[1].ok);
    CHECK_THROWS_AS(harness::parse_sweep_param("lr"), ConfigError);
    fs::remove_all(dir);
}
