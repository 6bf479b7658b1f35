#include "allnc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "allnc/errors.hpp"
#include "allnc/kernels.hpp"

namespace allnc::model {

namespace {

constexpr const char* kManifestMagic = "allnc-params";
constexpr int kManifestVersion = 1;

// Every affine bias starts slightly positive. With zero biases a row whose
// ReLUs are all dead maps to an exactly zero feature, z or h row, which the
// normalizations downstream cannot handle.
constexpr double kBiasInit = 0.01;

void add_affine(NetworkParams& p, const std::string& prefix, std::size_t fan_in, std::size_t fan_out, double stddev,
                double bias, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor w = Tensor::matrix(fan_in, fan_out);
    for (double& v : w.data()) v = normal(rng);
    p.names.push_back(prefix + ".weight");
    p.tensors.push_back(std::move(w));
    p.names.push_back(prefix + ".bias");
    p.tensors.emplace_back(Shape{fan_out}, bias);
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor out = matmul(x, w);
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < out.rows(); ++i) k.axpy(1.0, b.data().data(), out.row(i).data(), out.cols());
    return out;
}

void relu_inplace(Tensor& t, double& min_abs) {
    for (double& v : t.data()) {
        min_abs = std::min(min_abs, std::abs(v));
        v = v > 0.0 ? v : 0.0;
    }
}

ad::Var affine(ad::Var x, ad::Var w, ad::Var b) { return ad::add_row(ad::matmul(x, w), b); }

}  // namespace

void NetworkDims::validate() const {
    auto check = [](std::size_t v, const char* what) {
        if (v == 0) throw DimensionError(std::string("network dimension '") + what + "' must be positive");
    };
    check(input, "input");
    for (std::size_t h : hidden) check(h, "hidden");
    check(feature, "feature");
    check(projection, "projection");
    check(classes, "classes");
}

std::size_t NetworkParams::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ContractError("unknown parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

NetworkParams init_params(const NetworkDims& dims, std::uint64_t seed) {
    dims.validate();
    std::mt19937_64 rng(seed);
    NetworkParams p;
    p.dims = dims;
    std::size_t fan_in = dims.input;
    for (std::size_t k = 0; k < dims.hidden.size(); ++k) {
        add_affine(p, "encoder." + std::to_string(k), fan_in, dims.hidden[k], std::sqrt(2.0 / fan_in), kBiasInit,
                   rng);
        fan_in = dims.hidden[k];
    }
    add_affine(p, "encoder." + std::to_string(dims.hidden.size()), fan_in, dims.feature, std::sqrt(2.0 / fan_in),
               kBiasInit, rng);
    add_affine(p, "proj1.0", dims.feature, dims.projection, std::sqrt(2.0 / dims.feature), kBiasInit, rng);
    add_affine(p, "proj1.1", dims.projection, dims.projection, std::sqrt(1.0 / dims.projection), kBiasInit, rng);
    add_affine(p, "predictor.0", dims.projection, dims.projection, std::sqrt(2.0 / dims.projection), kBiasInit, rng);
    add_affine(p, "predictor.1", dims.projection, dims.projection, std::sqrt(1.0 / dims.projection), kBiasInit, rng);

    std::normal_distribution<double> small(0.0, 0.01);
    Tensor w = Tensor::matrix(dims.classes, dims.feature);
    for (double& v : w.data()) v = small(rng);
    p.names.emplace_back("classifier.weight");
    p.tensors.push_back(std::move(w));
    p.names.emplace_back("classifier.bias");
    p.tensors.emplace_back(Shape{dims.classes}, 0.0);
    return p;
}

BoundNetwork bind(ad::Tape& tape, const NetworkParams& params) {
    BoundNetwork net;
    net.params = &params;
    net.vars.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) net.vars.push_back(tape.parameter(t));
    return net;
}

ForwardVars forward(const BoundNetwork& net, ad::Var x) {
    const NetworkParams& p = *net.params;
    if (x.value().cols() != p.dims.input) {
        throw DimensionError("forward: input has " + std::to_string(x.value().cols()) + " columns, encoder expects " +
                             std::to_string(p.dims.input));
    }
    ad::Var h = x;
    for (std::size_t k = 0; k < p.encoder_layers(); ++k) {
        h = ad::relu(affine(h, net.vars[2 * k], net.vars[2 * k + 1]));
    }
    ForwardVars out;
    out.features = h;
    const std::size_t base = 2 * p.encoder_layers();
    ad::Var z = ad::relu(affine(out.features, net.vars[base], net.vars[base + 1]));
    out.z = affine(z, net.vars[base + 2], net.vars[base + 3]);
    ad::Var q = ad::relu(affine(out.z, net.vars[base + 4], net.vars[base + 5]));
    out.h = affine(q, net.vars[base + 6], net.vars[base + 7]);
    out.logits = ad::add_row(ad::matmul(out.features, ad::transpose(net.classifier_weight())), net.classifier_bias());
    return out;
}

namespace {

ForwardValues forward_values(const NetworkParams& p, const Tensor& x, double& min_abs) {
    if (x.cols() != p.dims.input) {
        throw DimensionError("forward: input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                             std::to_string(p.dims.input));
    }
    const auto& t = p.tensors;
    Tensor h = x;
    for (std::size_t k = 0; k < p.encoder_layers(); ++k) {
        h = affine(h, t[2 * k], t[2 * k + 1]);
        relu_inplace(h, min_abs);
    }
    ForwardValues out;
    out.features = h;
    const std::size_t base = 2 * p.encoder_layers();
    Tensor z = affine(out.features, t[base], t[base + 1]);
    relu_inplace(z, min_abs);
    out.z = affine(z, t[base + 2], t[base + 3]);
    Tensor q = affine(out.z, t[base + 4], t[base + 5]);
    relu_inplace(q, min_abs);
    out.h = affine(q, t[base + 6], t[base + 7]);
    out.logits = affine(out.features, transpose(p.classifier_weight()), p.classifier_bias());
    return out;
}

}  // namespace

ForwardValues forward(const NetworkParams& params, const Tensor& x) {
    double ignored = 0.0;
    return forward_values(params, x, ignored);
}

double min_abs_preactivation(const NetworkParams& params, const Tensor& x) {
    double m = std::numeric_limits<double>::infinity();
    forward_values(params, x, m);
    return m;
}

OptimizerState make_optimizer(const NetworkParams& params, double learning_rate, double momentum,
                              double weight_decay, bool freeze_classifier_bias) {
    OptimizerState s;
    s.learning_rate = learning_rate;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.freeze_classifier_bias = freeze_classifier_bias;
    for (const Tensor& t : params.tensors) s.velocity.emplace_back(t.shape(), 0.0);
    return s;
}

void sgd_step(NetworkParams& params, std::span<const Tensor> grads, OptimizerState& state) {
    if (grads.size() != params.tensors.size() || state.velocity.size() != params.tensors.size()) {
        throw DimensionError("sgd_step: gradient/velocity count does not match parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].same_shape(params.tensors[i]) || !state.velocity[i].same_shape(params.tensors[i])) {
            throw DimensionError("sgd_step: shape mismatch for '" + params.names[i] + "'");
        }
        if (!grads[i].all_finite()) {
            throw TrainingDivergedError("non-finite gradient for parameter '" + params.names[i] + "'", params.names[i]);
        }
    }
    const auto& k = kernels::active();
    const std::size_t last = params.tensors.size() - 1;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (state.freeze_classifier_bias && i == last) continue;
        Tensor& theta = params.tensors[i];
        Tensor& v = state.velocity[i];
        const std::size_t n = theta.size();
        k.scal(state.momentum, v.data().data(), n);
        k.axpy(1.0, grads[i].data().data(), v.data().data(), n);
        k.axpy(state.weight_decay, theta.data().data(), v.data().data(), n);
        k.axpy(-state.learning_rate, v.data().data(), theta.data().data(), n);
    }
}

void save_snapshot(const NetworkParams& params, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto manifest_path = dir / "manifest.txt";
    std::ofstream manifest(manifest_path);
    if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());
    const auto& d = params.dims;
    manifest << kManifestMagic << ' ' << kManifestVersion << '\n';
    manifest << "dims " << d.input << ' ' << d.hidden.size();
    for (std::size_t h : d.hidden) manifest << ' ' << h;
    manifest << ' ' << d.feature << ' ' << d.projection << ' ' << d.classes << '\n';
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const Tensor& t = params.tensors[i];
        const std::string file = params.names[i] + ".bin";
        manifest << params.names[i] << ' ' << t.rank();
        for (std::size_t s : t.shape()) manifest << ' ' << s;
        manifest << ' ' << file << '\n';
        std::ofstream out(dir / file, std::ios::binary);
        out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    }
    if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());
}

NetworkParams load_snapshot(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw std::runtime_error("cannot read " + manifest_path.string());
    std::string magic;
    int version = 0;
    manifest >> magic >> version;
    if (magic != kManifestMagic || version != kManifestVersion) {
        throw ParseError("unsupported snapshot manifest in " + manifest_path.string(), 1);
    }
    NetworkParams p;
    std::string tag;
    std::size_t n_hidden = 0;
    manifest >> tag >> p.dims.input >> n_hidden;
    if (tag != "dims") throw ParseError("missing dims line in " + manifest_path.string(), 2);
    p.dims.hidden.resize(n_hidden);
    for (std::size_t& h : p.dims.hidden) manifest >> h;
    manifest >> p.dims.feature >> p.dims.projection >> p.dims.classes;
    std::string line;
    std::getline(manifest, line);
    std::size_t lineno = 2;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string name, file;
        std::size_t rank = 0;
        is >> name >> rank;
        Shape shape(rank);
        for (std::size_t& s : shape) is >> s;
        is >> file;
        if (!is) throw ParseError("malformed manifest entry in " + manifest_path.string(), lineno);
        Tensor t(shape, 0.0);
        std::ifstream in(dir / file, std::ios::binary);
        in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in || in.peek() != std::char_traits<char>::eof()) {
            throw std::runtime_error("size mismatch reading " + (dir / file).string());
        }
        p.names.push_back(name);
        p.tensors.push_back(std::move(t));
    }
    const NetworkParams reference = init_params(p.dims, 0);
    if (reference.names != p.names) throw ParseError("snapshot parameter list does not match its dims", 0);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        if (!reference.tensors[i].same_shape(p.tensors[i])) {
            throw DimensionError("snapshot tensor '" + p.names[i] + "' has shape " +
                                 shape_string(p.tensors[i].shape()));
        }
    }
    return p;
}

}  // namespace allnc::model
