#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "allnc/config.hpp"
#include "allnc/data.hpp"
#include "allnc/model.hpp"
#include "allnc/ncmetrics.hpp"

namespace allnc::harness {

enum class ShotGroup { many, medium, few };

// Many: count > many_above; Few: count <= few_at_most; Medium in between.
struct GroupThresholds {
    double many_above = 100.0;
    double few_at_most = 20.0;

    // 0.2 * n_max and 0.04 * n_max, i.e. 100 and 20 at n_max = 500.
    static GroupThresholds scaled(std::size_t n_max);
};

std::vector<ShotGroup> assign_groups(const std::vector<std::size_t>& train_counts, const GroupThresholds& t);

struct Accuracy {
    double all = 0.0;
    // NaN when the group has no classes.
    double many = 0.0;
    double medium = 0.0;
    double few = 0.0;
    std::vector<double> per_class;
};

struct Evaluation {
    Accuracy accuracy;
    nc::NCReport report;  // on the evaluation set's features
};

// Argmax-logit accuracy overall and per shot group.
Evaluation evaluate(const model::NetworkParams& params, const data::Dataset& test,
                    const std::vector<std::size_t>& train_counts, const GroupThresholds& thresholds);

struct LossBreakdown {
    double ce = 0.0;  // mean of the two branches' plain CE
    double re = 0.0;  // mean of the two branches' reweighted CE
    double hycon = 0.0;
    double p2p_mu = 0.0;
    double p2p_w = 0.0;
    double branch1 = 0.0;
    double branch2 = 0.0;
    double total = 0.0;
    double predictor_grad_norm = 0.0;
};

/// One mini-batch objective on the tape: both branch losses, HyCon and P2P
/// on class means combined with alpha. f1/f2 are the forwards of the two
/// views of the same batch; disabled terms are constant zero nodes.
struct BatchObjective {
    ad::Var total;
    ad::Var branch1;
    ad::Var branch2;
    ad::Var hycon;
    ad::Var p2p_mu;
    double ce = 0.0;
    double re = 0.0;
    double p2p_w = 0.0;
    // Forward values; predictor_grad_norm is left at 0.
    LossBreakdown values() const;
};

// cfg.loss.class_weights must already hold the training-count weights.
BatchObjective batch_objective(const TrainConfig& cfg, const model::BoundNetwork& net, const model::ForwardVars& f1,
                               const model::ForwardVars& f2, std::span<const std::size_t> labels, double eta);

struct EpochLog {
    std::size_t epoch = 0;
    double eta = 1.0;
    LossBreakdown loss;
    nc::NCReport train_report;
    Accuracy test_accuracy;
};

struct RunResult {
    TrainConfig config;
    std::vector<EpochLog> epochs;
    model::NetworkParams params;
    std::vector<std::size_t> train_counts;

    // Final snapshot at CSV precision; final_report is computed from exactly
    // these values so the exported files reproduce it.
    Tensor train_features;
    std::vector<std::size_t> train_labels;
    Tensor classifier_weight;
    std::vector<double> classifier_bias;
    nc::NCReport final_report;
    Evaluation final_eval;

    bool diverged = false;
    std::string error;
};

struct Datasets {
    data::Dataset train;
    data::Dataset test;
    std::size_t n_max = 0;
};

// Builds (or loads) the training and balanced evaluation sets.
Datasets make_datasets(const TrainConfig& config);

// Independent RNG stream for a purpose tag, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Runs the full training procedure.
///
/// Per epoch T = 1..T_max: eta from the schedule, then for each shuffled
/// batch two augmented views, a shared-weight forward of both, batch class
/// means, HyCon, P2P on class means and on classifier rows, both branch
/// losses, the total, one backward and one SGD step. The epoch ends with
/// diagnostics on the clean training set and accuracy on the balanced test
/// set. A non-finite loss or gradient stops training with the last good
/// epoch's parameters and diverged = true.
RunResult run_train(const TrainConfig& config);
RunResult run_train(const TrainConfig& config, const Datasets& datasets);

// Writes config.resolved, epochs.csv, report.json, features.csv,
// weights.csv, icpa_mu.csv, icpa_w.csv and params/.
void emit_outputs(const RunResult& run, const std::filesystem::path& out_dir);

std::string epochs_csv_header();
void write_epochs_csv(const std::vector<EpochLog>& epochs, const std::filesystem::path& path);

struct SweepRow {
    double value = 0.0;
    bool ok = false;
    std::string error;
    Accuracy accuracy;
    nc::NCReport report;
};

enum class SweepParam { gamma, alpha, beta };
SweepParam parse_sweep_param(const std::string& s);
std::string sweep_param_name(SweepParam p);

/// One run per value with everything else (seeds included) shared. Runs
/// execute concurrently up to the hardware thread count; a failed run is
/// recorded and the sweep continues. With out_dir set, each run is emitted
/// to <out_dir>/<param>_<value>/ and the table to <out_dir>/sweep.csv.
std::vector<SweepRow> sweep(const TrainConfig& config, SweepParam param, const std::vector<double>& values,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

void write_sweep_csv(SweepParam param, const std::vector<SweepRow>& rows, const std::filesystem::path& path);

// report.json body; shared by the train and metrics commands.
std::string report_json(const nc::NCReport& report, const Evaluation* evaluation = nullptr);

// Writes report.json, icpa_mu.csv and icpa_w.csv.
void write_report_files(const nc::NCReport& report, const Evaluation* evaluation, const std::filesystem::path& out_dir);

}  // namespace allnc::harness
