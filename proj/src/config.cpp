#include "allnc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "allnc/csv.hpp"
#include "allnc/errors.hpp"

namespace allnc::harness {

Mode parse_mode(const std::string& s) {
    if (s == "allnc") return Mode::allnc;
    if (s == "ce" || s == "ce-baseline") return Mode::ce;
    if (s == "ablation") return Mode::ablation;
    throw ConfigError("unknown mode '" + s + "' (expected allnc, ce or ablation)");
}

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::allnc:
            return "allnc";
        case Mode::ce:
            return "ce";
        case Mode::ablation:
            return "ablation";
    }
    return "?";
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("key '" + key + "': '" + v + "' is not a non-negative integer");
    }
    return std::stoull(v);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty()) return out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(to_uint(key, trim(item)));
    return out;
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    using Setter = std::function<void(TrainConfig&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"mode", [](TrainConfig& c, const std::string& v) { c.mode = parse_mode(v); }},
        {"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_uint("seed", v); }},
        {"out_dir", [](TrainConfig& c, const std::string& v) { c.out_dir = v; }},
        {"train_csv", [](TrainConfig& c, const std::string& v) { c.train_csv = v; }},
        {"test_csv", [](TrainConfig& c, const std::string& v) { c.test_csv = v; }},
        {"classes",
         [](TrainConfig& c, const std::string& v) {
             c.synthetic.classes = c.long_tail.classes = c.dims.classes = to_uint("classes", v);
         }},
        {"input_dim",
         [](TrainConfig& c, const std::string& v) { c.synthetic.dim = c.dims.input = to_uint("input_dim", v); }},
        {"mean_placement",
         [](TrainConfig& c, const std::string& v) {
             if (v == "etf") {
                 c.synthetic.placement = data::MeanPlacement::etf;
             } else if (v == "random") {
                 c.synthetic.placement = data::MeanPlacement::random;
             } else {
                 throw ConfigError("key 'mean_placement': expected etf or random, got '" + v + "'");
             }
         }},
        {"mean_radius", [](TrainConfig& c, const std::string& v) { c.synthetic.radius = to_double("mean_radius", v); }},
        {"noise_std", [](TrainConfig& c, const std::string& v) { c.synthetic.noise_std = to_double("noise_std", v); }},
        {"mean_seed", [](TrainConfig& c, const std::string& v) { c.synthetic.mean_seed = to_uint("mean_seed", v); }},
        {"n_max", [](TrainConfig& c, const std::string& v) { c.long_tail.n_max = to_uint("n_max", v); }},
        {"beta", [](TrainConfig& c, const std::string& v) { c.long_tail.beta = to_double("beta", v); }},
        {"test_per_class", [](TrainConfig& c, const std::string& v) { c.test_per_class = to_uint("test_per_class", v); }},
        {"hidden_dims", [](TrainConfig& c, const std::string& v) { c.dims.hidden = to_list("hidden_dims", v); }},
        {"feature_dim", [](TrainConfig& c, const std::string& v) { c.dims.feature = to_uint("feature_dim", v); }},
        {"projection_dim",
         [](TrainConfig& c, const std::string& v) { c.dims.projection = to_uint("projection_dim", v); }},
        {"epochs", [](TrainConfig& c, const std::string& v) { c.loss.t_max = to_uint("epochs", v); }},
        {"batch_size", [](TrainConfig& c, const std::string& v) { c.batch_size = to_uint("batch_size", v); }},
        {"learning_rate",
         [](TrainConfig& c, const std::string& v) { c.learning_rate = to_double("learning_rate", v); }},
        {"momentum", [](TrainConfig& c, const std::string& v) { c.momentum = to_double("momentum", v); }},
        {"weight_decay", [](TrainConfig& c, const std::string& v) { c.weight_decay = to_double("weight_decay", v); }},
        {"freeze_bias", [](TrainConfig& c, const std::string& v) { c.freeze_bias = to_bool("freeze_bias", v); }},
        {"alpha", [](TrainConfig& c, const std::string& v) { c.loss.alpha = to_double("alpha", v); }},
        {"gamma", [](TrainConfig& c, const std::string& v) { c.loss.gamma = to_double("gamma", v); }},
        {"use_hycon", [](TrainConfig& c, const std::string& v) { c.use_hycon = to_bool("use_hycon", v); }},
        {"use_p2p_mu", [](TrainConfig& c, const std::string& v) { c.use_p2p_mu = to_bool("use_p2p_mu", v); }},
        {"use_p2p_w", [](TrainConfig& c, const std::string& v) { c.use_p2p_w = to_bool("use_p2p_w", v); }},
        {"use_gbbn", [](TrainConfig& c, const std::string& v) { c.use_gbbn = to_bool("use_gbbn", v); }},
        {"fixed_eta", [](TrainConfig& c, const std::string& v) { c.fixed_eta = to_double("fixed_eta", v); }},
        {"aug_noise_std", [](TrainConfig& c, const std::string& v) { c.aug_noise_std = to_double("aug_noise_std", v); }},
        {"aug_mask_prob", [](TrainConfig& c, const std::string& v) { c.aug_mask_prob = to_double("aug_mask_prob", v); }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(*this, value);
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (train_csv.empty() != test_csv.empty()) fail("train_csv and test_csv must be given together");
    if (train_csv.empty()) {
        if (synthetic.classes < 2) fail("classes must be >= 2");
        if (synthetic.placement == data::MeanPlacement::etf && synthetic.dim < synthetic.classes) {
            fail("mean_placement = etf needs input_dim >= classes");
        }
        if (!(synthetic.radius > 0.0)) fail("mean_radius must be > 0");
        if (synthetic.noise_std < 0.0) fail("noise_std must be >= 0");
        if (long_tail.n_max < 1) fail("n_max must be >= 1");
        if (!(long_tail.beta >= 1.0)) fail("beta must be >= 1");
        if (test_per_class < 1) fail("test_per_class must be >= 1");
    }
    try {
        dims.validate();
    } catch (const DimensionError& e) {
        fail(e.what());
    }
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (!(loss.alpha >= 0.0)) fail("alpha must be >= 0");
    if (!(loss.gamma > 0.0)) fail("gamma must be > 0");
    if (loss.t_max < 1) fail("epochs must be >= 1");
    if (!(fixed_eta >= 0.0 && fixed_eta <= 1.0)) fail("fixed_eta must be in [0, 1]");
    if (aug_noise_std < 0.0) fail("aug_noise_std must be >= 0");
    if (aug_mask_prob < 0.0 || aug_mask_prob > 1.0) fail("aug_mask_prob must be in [0, 1]");
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "mode = " << mode_name(mode) << '\n'
       << "seed = " << seed << '\n'
       << "out_dir = " << out_dir << '\n'
       << "train_csv = " << train_csv << '\n'
       << "test_csv = " << test_csv << '\n'
       << "classes = " << synthetic.classes << '\n'
       << "input_dim = " << synthetic.dim << '\n'
       << "mean_placement = " << (synthetic.placement == data::MeanPlacement::etf ? "etf" : "random") << '\n'
       << "mean_radius = " << io::fmt9(synthetic.radius) << '\n'
       << "noise_std = " << io::fmt9(synthetic.noise_std) << '\n'
       << "mean_seed = " << synthetic.mean_seed << '\n'
       << "n_max = " << long_tail.n_max << '\n'
       << "beta = " << io::fmt9(long_tail.beta) << '\n'
       << "test_per_class = " << test_per_class << '\n'
       << "hidden_dims = " << join(dims.hidden) << '\n'
       << "feature_dim = " << dims.feature << '\n'
       << "projection_dim = " << dims.projection << '\n'
       << "epochs = " << loss.t_max << '\n'
       << "batch_size = " << batch_size << '\n'
       << "learning_rate = " << io::fmt9(learning_rate) << '\n'
       << "momentum = " << io::fmt9(momentum) << '\n'
       << "weight_decay = " << io::fmt9(weight_decay) << '\n'
       << "freeze_bias = " << flag(freeze_bias) << '\n'
       << "alpha = " << io::fmt9(loss.alpha) << '\n'
       << "gamma = " << io::fmt9(loss.gamma) << '\n'
       << "use_hycon = " << flag(use_hycon) << '\n'
       << "use_p2p_mu = " << flag(use_p2p_mu) << '\n'
       << "use_p2p_w = " << flag(use_p2p_w) << '\n'
       << "use_gbbn = " << flag(use_gbbn) << '\n'
       << "fixed_eta = " << io::fmt9(fixed_eta) << '\n'
       << "aug_noise_std = " << io::fmt9(aug_noise_std) << '\n'
       << "aug_mask_prob = " << io::fmt9(aug_mask_prob) << '\n';
    return os.str();
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace allnc::harness
