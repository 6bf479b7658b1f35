#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "allnc/data.hpp"
#include "allnc/losses.hpp"
#include "allnc/model.hpp"

namespace allnc::harness {

enum class Mode { allnc, ce, ablation };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

/// Every experiment knob. The text form is one `key = value` per line with
/// `#` comments; see README for the key list. Unknown keys are rejected.
struct TrainConfig {
    Mode mode = Mode::allnc;
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";

    // Synthetic data unless train_csv is set; a CSV training set needs test_csv.
    std::string train_csv;
    std::string test_csv;
    data::SyntheticSpec synthetic;
    data::LongTailSpec long_tail;
    std::size_t test_per_class = 100;

    model::NetworkDims dims;

    std::size_t batch_size = 64;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-3;
    bool freeze_bias = false;

    // class_weights inside is filled from the training counts at run time.
    loss::LossConfig loss;

    // Component switches, honoured in ablation mode only.
    bool use_hycon = true;
    bool use_p2p_mu = true;
    bool use_p2p_w = true;
    bool use_gbbn = true;
    double fixed_eta = 0.5;

    double aug_noise_std = 0.5;
    double aug_mask_prob = 0.1;

    std::size_t epochs() const { return loss.t_max; }

    // Effective switches after applying the mode.
    bool hycon_on() const { return mode == Mode::allnc || (mode == Mode::ablation && use_hycon); }
    bool p2p_mu_on() const { return mode == Mode::allnc || (mode == Mode::ablation && use_p2p_mu); }
    bool p2p_w_on() const { return mode == Mode::allnc || (mode == Mode::ablation && use_p2p_w); }
    bool gbbn_on() const { return mode == Mode::allnc || (mode == Mode::ablation && use_gbbn); }

    // Throws ConfigError describing the first violated constraint.
    void validate() const;

    // Assigns one key; throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);

    // Canonical text form, readable by parse_config.
    std::string to_text() const;
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace allnc::harness
