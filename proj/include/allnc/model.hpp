#pragma once

// Encoder -> projection head -> predictor head, plus a linear classifier on
// the encoder features. Both augmented views run through one set of weights.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "allnc/autodiff.hpp"

namespace allnc::model {

struct NetworkDims {
    std::size_t input = 32;
    std::vector<std::size_t> hidden{128, 64};
    std::size_t feature = 16;
    std::size_t projection = 16;
    std::size_t classes = 10;

    // Throws DimensionError if any width is zero.
    void validate() const;
};

/// All trainable tensors in one fixed order:
///   encoder.<k>.weight/bias for each hidden layer and the feature layer,
///   proj1.0/1, predictor.0/1, classifier.weight (C x d), classifier.bias.
/// Affine weights are stored fan_in x fan_out so a layer is x * W + b.
struct NetworkParams {
    NetworkDims dims;
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t encoder_layers() const { return dims.hidden.size() + 1; }
    std::size_t index_of(const std::string& name) const;
    const Tensor& get(const std::string& name) const { return tensors[index_of(name)]; }
    Tensor& get(const std::string& name) { return tensors[index_of(name)]; }

    const Tensor& classifier_weight() const { return tensors[tensors.size() - 2]; }
    const Tensor& classifier_bias() const { return tensors.back(); }

    friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
        return a.names == b.names && a.tensors == b.tensors;
    }
};

// He-scaled Gaussian weights before ReLUs, 1/sqrt(fan_in) for the linear
// head outputs, N(0, 0.01^2) classifier. Layer biases start at 0.01, the
// classifier bias at zero. Deterministic per seed.
NetworkParams init_params(const NetworkDims& dims, std::uint64_t seed);

// One tape leaf per parameter; every forward on this tape shares them.
struct BoundNetwork {
    const NetworkParams* params = nullptr;
    std::vector<ad::Var> vars;

    ad::Var operator[](const std::string& name) const { return vars[params->index_of(name)]; }
    ad::Var classifier_weight() const { return vars[vars.size() - 2]; }
    ad::Var classifier_bias() const { return vars.back(); }
};

BoundNetwork bind(ad::Tape& tape, const NetworkParams& params);

struct ForwardVars {
    ad::Var features;  // N x d
    ad::Var z;         // N x p, projection head
    ad::Var h;         // N x p, predictor head
    ad::Var logits;    // N x C
};

ForwardVars forward(const BoundNetwork& net, ad::Var x);

struct ForwardValues {
    Tensor features;
    Tensor z;
    Tensor h;
    Tensor logits;
};

// Evaluation-mode forward without gradient bookkeeping.
ForwardValues forward(const NetworkParams& params, const Tensor& x);

// Smallest |pre-activation| entering any ReLU for this input batch.
double min_abs_preactivation(const NetworkParams& params, const Tensor& x);

struct OptimizerState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-3;
    bool freeze_classifier_bias = false;
    std::vector<Tensor> velocity;
};

OptimizerState make_optimizer(const NetworkParams& params, double learning_rate, double momentum,
                              double weight_decay, bool freeze_classifier_bias = false);

/// v <- m*v + g + wd*theta;  theta <- theta - lr*v.
///
/// All gradients are checked before anything is modified; a non-finite
/// entry throws TrainingDivergedError naming the parameter.
void sgd_step(NetworkParams& params, std::span<const Tensor> grads, OptimizerState& state);

// Directory snapshot: manifest.txt plus one little-endian float64 file per
// tensor. Throws std::runtime_error with the path on I/O failure.
void save_snapshot(const NetworkParams& params, const std::filesystem::path& dir);
NetworkParams load_snapshot(const std::filesystem::path& dir);

}  // namespace allnc::model
