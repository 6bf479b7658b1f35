#include "allnc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <thread>

#include <json.hpp>

#include "allnc/csv.hpp"
#include "allnc/errors.hpp"
#include "allnc/losses.hpp"

namespace allnc::harness {

namespace {

constexpr std::uint64_t kStreamTrainData = 1;
constexpr std::uint64_t kStreamTestData = 2;
constexpr std::uint64_t kStreamInit = 3;
constexpr std::uint64_t kStreamBatches = 4;
constexpr std::uint64_t kStreamViews = 5;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Accuracy accuracy_of(const Tensor& logits, const data::Dataset& test, const std::vector<std::size_t>& train_counts,
                     const GroupThresholds& thresholds) {
    const std::size_t classes = logits.cols();
    std::vector<std::size_t> hits(classes, 0), seen(classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto row = logits.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        const std::size_t y = test.labels[i];
        ++seen[y];
        if (best == y) {
            ++hits[y];
            ++correct;
        }
    }
    Accuracy acc;
    acc.all = test.size() == 0 ? kNaN : static_cast<double>(correct) / static_cast<double>(test.size());
    acc.per_class.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        acc.per_class[c] = seen[c] == 0 ? kNaN : static_cast<double>(hits[c]) / static_cast<double>(seen[c]);
    }
    // Group accuracy is the sample-weighted hit rate over the group's classes.
    const auto groups = assign_groups(train_counts, thresholds);
    auto grouped = [&](ShotGroup g) {
        std::size_t h = 0, s = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            if (groups[c] != g) continue;
            h += hits[c];
            s += seen[c];
        }
        return s == 0 ? kNaN : static_cast<double>(h) / static_cast<double>(s);
    };
    acc.many = grouped(ShotGroup::many);
    acc.medium = grouped(ShotGroup::medium);
    acc.few = grouped(ShotGroup::few);
    return acc;
}

nc::NCReport nan_report() {
    nc::NCReport r;
    r.nc1 = r.std_cos_mu = r.std_cos_w = r.delta = r.ncc_agreement = kNaN;
    return r;
}

std::vector<double> bias_values(const Tensor& b) { return {b.data().begin(), b.data().end()}; }

nlohmann::json matrix_json(const Tensor& m) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return out;
}

nlohmann::json accuracy_json(const Accuracy& a) {
    return {{"all", a.all}, {"many", a.many}, {"medium", a.medium}, {"few", a.few}, {"per_class", a.per_class}};
}

nlohmann::json report_to_json(const nc::NCReport& r, const Evaluation* evaluation) {
    std::vector<std::size_t> present = r.classes_present;
    for (auto& c : present) ++c;
    nlohmann::json j = {{"nc1", r.nc1},
                        {"std_cos_mu", r.std_cos_mu},
                        {"std_cos_w", r.std_cos_w},
                        {"delta", r.delta},
                        {"ncc_agreement", r.ncc_agreement},
                        {"classes_present", present},
                        {"partial_coverage", r.partial_coverage},
                        {"icpa_mu", matrix_json(r.icpa_mu)},
                        {"icpa_w", matrix_json(r.icpa_w)}};
    if (evaluation != nullptr) {
        j["evaluation"] = {{"accuracy", accuracy_json(evaluation->accuracy)},
                           {"nc1", evaluation->report.nc1},
                           {"std_cos_mu", evaluation->report.std_cos_mu},
                           {"std_cos_w", evaluation->report.std_cos_w},
                           {"delta", evaluation->report.delta},
                           {"ncc_agreement", evaluation->report.ncc_agreement}};
    }
    return j;
}

void write_icpa(const Tensor& icpa, const std::vector<std::size_t>& classes, const std::filesystem::path& path) {
    std::vector<std::string> header;
    for (std::size_t c : classes) header.push_back("class_" + std::to_string(c + 1));
    io::write_matrix_csv(path, header, icpa);
}

std::string fmt_or_nan(double v) { return std::isnan(v) ? "nan" : io::fmt9(v); }

}  // namespace

GroupThresholds GroupThresholds::scaled(std::size_t n_max) {
    const double n = static_cast<double>(n_max);
    return {0.2 * n, 0.04 * n};
}

std::vector<ShotGroup> assign_groups(const std::vector<std::size_t>& train_counts, const GroupThresholds& t) {
    std::vector<ShotGroup> out;
    out.reserve(train_counts.size());
    for (std::size_t n : train_counts) {
        const double v = static_cast<double>(n);
        out.push_back(v > t.many_above ? ShotGroup::many : (v <= t.few_at_most ? ShotGroup::few : ShotGroup::medium));
    }
    return out;
}

Evaluation evaluate(const model::NetworkParams& params, const data::Dataset& test,
                    const std::vector<std::size_t>& train_counts, const GroupThresholds& thresholds) {
    const auto out = model::forward(params, test.x);
    Evaluation e;
    e.accuracy = accuracy_of(out.logits, test, train_counts, thresholds);
    try {
        e.report = nc::compute_report(out.features, test.labels, params.classifier_weight(),
                                      params.classifier_bias().data(), params.dims.classes);
    } catch (const DegenerateInputError&) {
        e.report = nan_report();
    }
    return e;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over the pair
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Datasets make_datasets(const TrainConfig& config) {
    Datasets ds;
    if (!config.train_csv.empty()) {
        ds.train = data::load_csv(config.train_csv);
        ds.test = data::load_csv(config.test_csv);
        if (ds.test.dim() != ds.train.dim()) throw ConfigError("test_csv feature count differs from train_csv");
        if (ds.test.label_base != ds.train.label_base || ds.test.classes > ds.train.classes) {
            throw ConfigError("test_csv labels do not match train_csv labels");
        }
        ds.test.classes = ds.train.classes;
        const auto counts = ds.train.counts();
        ds.n_max = *std::max_element(counts.begin(), counts.end());
        return ds;
    }
    data::LongTailSpec lt = config.long_tail;
    lt.classes = config.synthetic.classes;
    const auto counts = data::long_tail_counts(lt);
    ds.train = data::gen_gaussian_mixture(config.synthetic, counts, derive_seed(config.seed, kStreamTrainData));
    const std::vector<std::size_t> balanced(config.synthetic.classes, config.test_per_class);
    ds.test = data::gen_gaussian_mixture(config.synthetic, balanced, derive_seed(config.seed, kStreamTestData));
    ds.n_max = lt.n_max;
    return ds;
}

BatchObjective batch_objective(const TrainConfig& cfg, const model::BoundNetwork& net, const model::ForwardVars& f1,
                               const model::ForwardVars& f2, std::span<const std::size_t> y, double eta) {
    ad::Tape& tape = f1.logits.tape();
    const ad::Var zero = tape.constant(Tensor::scalar(0.0));
    BatchObjective o;
    o.hycon = zero;
    o.p2p_mu = zero;
    if (cfg.mode == Mode::ce) {
        o.branch1 = loss::cross_entropy(f1.logits, y);
        o.branch2 = loss::cross_entropy(f2.logits, y);
        o.ce = 0.5 * (o.branch1.value().item() + o.branch2.value().item());
    } else {
        const auto& weights = cfg.loss.class_weights;
        const auto t1 = loss::branch_loss(f1.logits, y, eta, weights, net.classifier_weight(), cfg.p2p_w_on());
        const auto t2 = loss::branch_loss(f2.logits, y, eta, weights, net.classifier_weight(), cfg.p2p_w_on());
        o.branch1 = t1.total;
        o.branch2 = t2.total;
        o.ce = 0.5 * (t1.ce.value().item() + t2.ce.value().item());
        o.re = 0.5 * (t1.re.value().item() + t2.re.value().item());
        if (t1.p2p_w.valid()) o.p2p_w = t1.p2p_w.value().item();
        if (cfg.hycon_on()) {
            o.hycon = loss::hycon(f1.h, f2.h, f1.z, f2.z, loss::class_mean_rows(f1.z, y), loss::class_mean_rows(f2.z, y));
        }
        if (cfg.p2p_mu_on()) {
            // Both views hold the same samples, so the two-view class mean is
            // the average of the per-view means.
            ad::Var means = ad::scale(
                ad::add(loss::batch_class_means(f1.features, y), loss::batch_class_means(f2.features, y)), 0.5);
            if (means.value().rows() >= 2) o.p2p_mu = loss::p2p(means, true);
        }
    }
    o.total = loss::total_loss(o.branch1, o.branch2, o.hycon, o.p2p_mu, cfg.loss.alpha);
    return o;
}

LossBreakdown BatchObjective::values() const {
    LossBreakdown b;
    b.ce = ce;
    b.re = re;
    b.p2p_w = p2p_w;
    b.hycon = hycon.value().item();
    b.p2p_mu = p2p_mu.value().item();
    b.branch1 = branch1.value().item();
    b.branch2 = branch2.value().item();
    b.total = total.value().item();
    return b;
}

RunResult run_train(const TrainConfig& config) { return run_train(config, make_datasets(config)); }

RunResult run_train(const TrainConfig& config, const Datasets& datasets) {
    RunResult run;
    run.config = config;
    TrainConfig& cfg = run.config;
    cfg.dims.input = datasets.train.dim();
    cfg.dims.classes = datasets.train.classes;
    cfg.validate();

    const data::Dataset& train = datasets.train;
    run.train_counts = train.counts();
    cfg.loss.class_weights = loss::inverse_frequency_weights(run.train_counts);
    const GroupThresholds thresholds = GroupThresholds::scaled(datasets.n_max);

    run.params = model::init_params(cfg.dims, derive_seed(cfg.seed, kStreamInit));
    model::OptimizerState opt =
        model::make_optimizer(run.params, cfg.learning_rate, cfg.momentum, cfg.weight_decay, cfg.freeze_bias);
    data::ViewAugmenter augmenter(cfg.aug_noise_std, cfg.aug_mask_prob, derive_seed(cfg.seed, kStreamViews));

    const std::size_t t_max = cfg.epochs();
    const std::size_t first_pred = run.params.index_of("predictor.0.weight");

    for (std::size_t epoch = 1; epoch <= t_max; ++epoch) {
        const double eta = cfg.mode == Mode::ce ? 1.0
                           : cfg.gbbn_on()      ? loss::eta(epoch, t_max, cfg.loss.gamma)
                                                : cfg.fixed_eta;
        const model::NetworkParams saved_params = run.params;
        const model::OptimizerState saved_opt = opt;
        LossBreakdown sum;
        std::size_t steps = 0;
        try {
            for (const data::Batch& batch : data::batches(train, cfg.batch_size, derive_seed(cfg.seed, kStreamBatches),
                                                          epoch)) {
                ad::Tape tape;
                const model::BoundNetwork net = model::bind(tape, run.params);
                auto [x1, x2] = augmenter.two_views(batch.x);
                const auto f1 = model::forward(net, tape.constant(std::move(x1)));
                const auto f2 = model::forward(net, tape.constant(std::move(x2)));
                const BatchObjective obj = batch_objective(cfg, net, f1, f2, batch.labels, eta);
                const ad::Var total = obj.total;
                LossBreakdown step = obj.values();
                if (!std::isfinite(step.total)) {
                    throw TrainingDivergedError("non-finite loss at epoch " + std::to_string(epoch), "total");
                }
                tape.backward(total);

                std::vector<Tensor> grads;
                grads.reserve(net.vars.size());
                for (const ad::Var& v : net.vars) grads.push_back(v.grad());
                double pred_sq = 0.0;
                for (std::size_t i = first_pred; i < first_pred + 4; ++i)
                    for (double g : grads[i].data()) pred_sq += g * g;
                step.predictor_grad_norm = std::sqrt(pred_sq);
                model::sgd_step(run.params, grads, opt);

                sum.ce += step.ce;
                sum.re += step.re;
                sum.hycon += step.hycon;
                sum.p2p_mu += step.p2p_mu;
                sum.p2p_w += step.p2p_w;
                sum.branch1 += step.branch1;
                sum.branch2 += step.branch2;
                sum.total += step.total;
                sum.predictor_grad_norm += step.predictor_grad_norm;
                ++steps;
            }
        } catch (const TrainingDivergedError& e) {
            run.params = saved_params;
            opt = saved_opt;
            run.diverged = true;
            run.error = e.what();
            break;
        } catch (const DegenerateInputError& e) {
            run.params = saved_params;
            opt = saved_opt;
            run.diverged = true;
            run.error = std::string("degenerate batch: ") + e.what();
            break;
        }

        EpochLog log;
        log.epoch = epoch;
        log.eta = eta;
        const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(steps, 1));
        log.loss = {sum.ce * inv,      sum.re * inv,      sum.hycon * inv,   sum.p2p_mu * inv,
                    sum.p2p_w * inv,   sum.branch1 * inv, sum.branch2 * inv, sum.total * inv,
                    sum.predictor_grad_norm * inv};
        const auto out = model::forward(run.params, train.x);
        try {
            log.train_report = nc::compute_report(out.features, train.labels, run.params.classifier_weight(),
                                                  run.params.classifier_bias().data(), cfg.dims.classes);
        } catch (const DegenerateInputError&) {
            log.train_report = nan_report();
        }
        log.test_accuracy =
            accuracy_of(model::forward(run.params, datasets.test.x).logits, datasets.test, run.train_counts, thresholds);
        run.epochs.push_back(std::move(log));
    }

    run.train_features = model::forward(run.params, train.x).features;
    io::quantize9(run.train_features);
    run.train_labels = train.labels;
    run.classifier_weight = run.params.classifier_weight();
    io::quantize9(run.classifier_weight);
    run.classifier_bias = bias_values(run.params.classifier_bias());
    for (double& b : run.classifier_bias) b = io::quantize9(b);
    try {
        run.final_report = nc::compute_report(run.train_features, run.train_labels, run.classifier_weight,
                                              run.classifier_bias, cfg.dims.classes);
    } catch (const DegenerateInputError& e) {
        run.final_report = nan_report();
        if (run.error.empty()) run.error = std::string("final diagnostics undefined: ") + e.what();
    }
    run.final_eval = evaluate(run.params, datasets.test, run.train_counts, thresholds);
    return run;
}

std::string epochs_csv_header() {
    return "epoch,eta,ce,re,hycon,p2p_mu,p2p_w,branch1,branch2,total,pred_grad_norm,nc1,std_cos_mu,std_cos_w,delta,"
           "ncc_agreement,acc_all,acc_many,acc_medium,acc_few";
}

void write_epochs_csv(const std::vector<EpochLog>& epochs, const std::filesystem::path& path) {
    std::ofstream os = io::open_for_write(path);
    os << epochs_csv_header() << '\n';
    for (const EpochLog& e : epochs) {
        const auto& l = e.loss;
        const auto& r = e.train_report;
        const auto& a = e.test_accuracy;
        io::write_csv_row(os, {std::to_string(e.epoch), io::fmt9(e.eta), io::fmt9(l.ce), io::fmt9(l.re),
                               io::fmt9(l.hycon), io::fmt9(l.p2p_mu), io::fmt9(l.p2p_w), io::fmt9(l.branch1),
                               io::fmt9(l.branch2), io::fmt9(l.total), io::fmt9(l.predictor_grad_norm),
                               fmt_or_nan(r.nc1), fmt_or_nan(r.std_cos_mu), fmt_or_nan(r.std_cos_w),
                               fmt_or_nan(r.delta), fmt_or_nan(r.ncc_agreement), fmt_or_nan(a.all),
                               fmt_or_nan(a.many), fmt_or_nan(a.medium), fmt_or_nan(a.few)});
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string report_json(const nc::NCReport& report, const Evaluation* evaluation) {
    return report_to_json(report, evaluation).dump(2) + "\n";
}

void write_report_files(const nc::NCReport& report, const Evaluation* evaluation, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os = io::open_for_write(out_dir / "report.json");
        os << report_json(report, evaluation);
        if (!os) throw std::runtime_error("failed writing " + (out_dir / "report.json").string());
    }
    write_icpa(report.icpa_mu, report.classes_present, out_dir / "icpa_mu.csv");
    write_icpa(report.icpa_w, report.classes_present, out_dir / "icpa_w.csv");
}

void emit_outputs(const RunResult& run, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream os = io::open_for_write(out_dir / "config.resolved");
        os << run.config.to_text();
        if (run.diverged) os << "# diverged: " << run.error << '\n';
    }
    write_epochs_csv(run.epochs, out_dir / "epochs.csv");
    write_report_files(run.final_report, &run.final_eval, out_dir);

    const std::size_t d = run.train_features.cols();
    std::vector<std::string> fheader;
    for (std::size_t j = 0; j < d; ++j) fheader.push_back("f" + std::to_string(j + 1));
    fheader.emplace_back("label");
    std::vector<double> labels(run.train_labels.begin(), run.train_labels.end());
    for (double& l : labels) l += 1.0;
    io::write_matrix_csv(out_dir / "features.csv", fheader, run.train_features, &labels);

    std::vector<std::string> wheader;
    for (std::size_t j = 0; j < d; ++j) wheader.push_back("w" + std::to_string(j + 1));
    wheader.emplace_back("bias");
    io::write_matrix_csv(out_dir / "weights.csv", wheader, run.classifier_weight, &run.classifier_bias);

    model::save_snapshot(run.params, out_dir / "params");
}

SweepParam parse_sweep_param(const std::string& s) {
    if (s == "gamma") return SweepParam::gamma;
    if (s == "alpha") return SweepParam::alpha;
    if (s == "beta") return SweepParam::beta;
    throw ConfigError("sweep parameter must be gamma, alpha or beta, got '" + s + "'");
}

std::string sweep_param_name(SweepParam p) {
    switch (p) {
        case SweepParam::gamma:
            return "gamma";
        case SweepParam::alpha:
            return "alpha";
        case SweepParam::beta:
            return "beta";
    }
    return "?";
}

std::vector<SweepRow> sweep(const TrainConfig& config, SweepParam param, const std::vector<double>& values,
                            const std::optional<std::filesystem::path>& out_dir) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    auto one = [&](double value) {
        SweepRow row;
        row.value = value;
        TrainConfig cfg = config;
        switch (param) {
            case SweepParam::gamma:
                cfg.loss.gamma = value;
                break;
            case SweepParam::alpha:
                cfg.loss.alpha = value;
                break;
            case SweepParam::beta:
                cfg.long_tail.beta = value;
                break;
        }
        try {
            const std::filesystem::path sub =
                out_dir ? *out_dir / (sweep_param_name(param) + "_" + io::fmt9(value)) : std::filesystem::path{};
            if (out_dir) cfg.out_dir = sub.string();
            RunResult run = run_train(cfg);
            if (out_dir) emit_outputs(run, sub);
            row.ok = !run.diverged;
            row.error = run.error;
            row.accuracy = run.final_eval.accuracy;
            row.report = run.final_report;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        return row;
    };

    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<SweepRow> rows(values.size());
    for (std::size_t start = 0; start < values.size(); start += workers) {
        const std::size_t end = std::min(values.size(), start + workers);
        std::vector<std::future<SweepRow>> pending;
        for (std::size_t i = start; i < end; ++i) pending.push_back(std::async(std::launch::async, one, values[i]));
        for (std::size_t i = start; i < end; ++i) rows[i] = pending[i - start].get();
    }
    if (out_dir) write_sweep_csv(param, rows, *out_dir / "sweep.csv");
    return rows;
}

void write_sweep_csv(SweepParam param, const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream os = io::open_for_write(path);
    os << "param,value,status,acc_many,acc_medium,acc_few,acc_all,std_cos_mu,std_cos_w,delta,nc1,ncc_agreement\n";
    for (const SweepRow& r : rows) {
        std::string status = r.ok ? "ok" : "failed";
        const auto& a = r.accuracy;
        const auto& n = r.report;
        io::write_csv_row(os, {sweep_param_name(param), io::fmt9(r.value), status, fmt_or_nan(a.many),
                               fmt_or_nan(a.medium), fmt_or_nan(a.few), fmt_or_nan(a.all), fmt_or_nan(n.std_cos_mu),
                               fmt_or_nan(n.std_cos_w), fmt_or_nan(n.delta), fmt_or_nan(n.nc1),
                               fmt_or_nan(n.ncc_agreement)});
    }
}

}  // namespace allnc::harness
