// allnc: train / metrics / etf / sweep front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "allnc/csv.hpp"
#include "allnc/errors.hpp"
#include "allnc/etf.hpp"
#include "allnc/harness.hpp"
#include "allnc/kernels.hpp"
#include "allnc/ncmetrics.hpp"

namespace {

using namespace allnc;

int cmd_train(const std::string& config_path, const std::string& mode, std::int64_t seed, const std::string& out) {
    harness::TrainConfig cfg = harness::load_config(config_path);
    if (!mode.empty()) cfg.mode = harness::parse_mode(mode);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out.empty()) cfg.out_dir = out;
    const harness::RunResult run = harness::run_train(cfg);
    harness::emit_outputs(run, cfg.out_dir);
    const auto& r = run.final_report;
    const auto& a = run.final_eval.accuracy;
    std::cout << "mode=" << harness::mode_name(cfg.mode) << " epochs=" << run.epochs.size()
              << " acc_all=" << io::fmt9(a.all) << " acc_many=" << io::fmt9(a.many)
              << " acc_medium=" << io::fmt9(a.medium) << " acc_few=" << io::fmt9(a.few) << '\n'
              << "nc1=" << io::fmt9(r.nc1) << " std_cos_mu=" << io::fmt9(r.std_cos_mu)
              << " std_cos_w=" << io::fmt9(r.std_cos_w) << " delta=" << io::fmt9(r.delta)
              << " ncc_agreement=" << io::fmt9(r.ncc_agreement) << '\n'
              << "outputs written to " << cfg.out_dir << '\n';
    if (run.diverged) {
        std::cerr << "training diverged: " << run.error << '\n';
        return 3;
    }
    return 0;
}

int cmd_metrics(const std::string& features_path, const std::string& weights_path, const std::string& bias_path,
                const std::string& out) {
    const io::CsvTable feats = io::read_csv(features_path);
    const io::CsvTable wts = io::read_csv(weights_path);
    const std::size_t d = feats.rows.front().size() - 1;
    const std::size_t classes = wts.rows.size();
    const std::size_t wcols = wts.rows.front().size();
    if (wcols != d && wcols != d + 1) {
        throw DimensionError("weights have " + std::to_string(wcols) + " columns; features have " + std::to_string(d));
    }
    Tensor features = Tensor::matrix(feats.rows.size(), d);
    std::vector<double> raw_labels;
    double min_label = 1.0;
    for (std::size_t i = 0; i < feats.rows.size(); ++i) {
        std::copy(feats.rows[i].begin(), feats.rows[i].begin() + static_cast<std::ptrdiff_t>(d), features.row(i).begin());
        raw_labels.push_back(feats.rows[i][d]);
        min_label = std::min(min_label, feats.rows[i][d]);
    }
    // 1-based unless a 0 label shows up.
    const double base = min_label == 0.0 ? 0.0 : 1.0;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        const double v = raw_labels[i] - base;
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)) || v >= static_cast<double>(classes)) {
            throw ParseError(features_path + ": label outside 1.." + std::to_string(classes), feats.lines[i]);
        }
        labels.push_back(static_cast<std::size_t>(v));
    }
    Tensor weights = Tensor::matrix(classes, d);
    std::vector<double> bias;
    for (std::size_t c = 0; c < classes; ++c) {
        std::copy(wts.rows[c].begin(), wts.rows[c].begin() + static_cast<std::ptrdiff_t>(d), weights.row(c).begin());
        if (wcols == d + 1) bias.push_back(wts.rows[c][d]);
    }
    if (!bias_path.empty()) {
        const io::CsvTable b = io::read_csv(bias_path);
        bias.clear();
        for (const auto& row : b.rows) bias.insert(bias.end(), row.begin(), row.end());
        if (bias.size() != classes) throw DimensionError("bias file holds " + std::to_string(bias.size()) + " values");
    }
    const nc::NCReport report = nc::compute_report(features, labels, weights, bias, classes);
    harness::write_report_files(report, nullptr, out);
    std::cout << harness::report_json(report);
    return 0;
}

int cmd_etf(std::size_t dim, std::size_t classes, std::uint64_t seed, const std::string& csv) {
    const etf::EtfFrame frame = etf::make_etf(dim, classes, seed);
    const Tensor gram = matmul(transpose(frame.vertices), frame.vertices);
    std::cout << "gram (" << classes << "x" << classes << "):\n";
    for (std::size_t i = 0; i < classes; ++i) {
        for (std::size_t j = 0; j < classes; ++j) std::cout << (j ? " " : "") << io::fmt9(gram(i, j));
        std::cout << '\n';
    }
    std::cout << "deviation " << io::fmt9(etf::etf_deviation(frame.vertices)) << '\n'
              << "optimal_icpa_degrees " << io::fmt9(etf::optimal_icpa_degrees(classes)) << '\n';
    if (!csv.empty()) {
        std::vector<std::string> header;
        for (std::size_t c = 0; c < classes; ++c) header.push_back("v" + std::to_string(c + 1));
        io::write_matrix_csv(csv, header, frame.vertices);
    }
    return 0;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw ConfigError("bad sweep value '" + item + "'");
        out.push_back(v);
    }
    return out;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::string& values,
              const std::string& mode, const std::string& out) {
    harness::TrainConfig cfg = harness::load_config(config_path);
    if (!mode.empty()) cfg.mode = harness::parse_mode(mode);
    const std::filesystem::path dir = out.empty() ? std::filesystem::path(cfg.out_dir) : std::filesystem::path(out);
    const auto p = harness::parse_sweep_param(param);
    const auto rows = harness::sweep(cfg, p, parse_values(values), dir);
    int failed = 0;
    for (const auto& r : rows) {
        std::cout << param << "=" << io::fmt9(r.value) << (r.ok ? " ok" : " FAILED") << " acc_all="
                  << io::fmt9(r.accuracy.all) << " acc_few=" << io::fmt9(r.accuracy.few)
                  << " std_cos_w=" << io::fmt9(r.report.std_cos_w) << (r.ok ? "" : " (" + r.error + ")") << '\n';
        failed += r.ok ? 0 : 1;
    }
    std::cout << "table written to " << (dir / "sweep.csv").string() << '\n';
    return failed == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural-collapse lab: simplex ETFs, collapse diagnostics and long-tailed training"};
    app.require_subcommand(1);

    std::string config, mode, out;
    std::int64_t seed = -1;
    auto* train = app.add_subcommand("train", "train one model and write its artifacts");
    train->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
    train->add_option("--mode", mode, "allnc | ce | ablation (overrides config)");
    train->add_option("--seed", seed, "run seed (overrides config)");
    train->add_option("--out", out, "output directory (overrides config)");

    std::string features, weights, bias, metrics_out;
    auto* metrics = app.add_subcommand("metrics", "collapse diagnostics for exported features and weights");
    metrics->add_option("--features", features, "features CSV: d columns + label")->required()->check(CLI::ExistingFile);
    metrics->add_option("--weights", weights, "weights CSV: d columns [+ bias]")->required()->check(CLI::ExistingFile);
    metrics->add_option("--bias", bias, "bias CSV, one value per class")->check(CLI::ExistingFile);
    metrics->add_option("--out", metrics_out, "output directory")->required();

    std::size_t dim = 0, classes = 0;
    std::uint64_t etf_seed = 0;
    std::string etf_csv;
    auto* etf_cmd = app.add_subcommand("etf", "build a simplex ETF and print its Gram matrix");
    etf_cmd->add_option("--dim", dim, "ambient dimension q")->required();
    etf_cmd->add_option("--classes", classes, "vertex count C")->required();
    etf_cmd->add_option("--seed", etf_seed, "rotation seed");
    etf_cmd->add_option("--csv", etf_csv, "write the q x C vertex matrix here");

    std::string sweep_config, param, values, sweep_mode, sweep_out;
    auto* sweep = app.add_subcommand("sweep", "grid over one parameter with shared seeds");
    sweep->add_option("--config", sweep_config, "config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "gamma | alpha | beta")->required();
    sweep->add_option("--values", values, "comma-separated values")->required();
    sweep->add_option("--mode", sweep_mode, "allnc | ce | ablation (overrides config)");
    sweep->add_option("--out", sweep_out, "output directory (default: config out_dir)");

    auto* isa = app.add_flag_callback(
        "--print-isa", [] { std::cerr << "kernels: " << allnc::kernels::name(allnc::kernels::active().isa) << '\n'; },
        "report the selected SIMD kernel table");
    (void)isa;

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return cmd_train(config, mode, seed, out);
        if (*metrics) return cmd_metrics(features, weights, bias, metrics_out);
        if (*etf_cmd) return cmd_etf(dim, classes, etf_seed, etf_csv);
        if (*sweep) return cmd_sweep(sweep_config, param, values, sweep_mode, sweep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
