#include "allnc/losses.hpp"

#include <cmath>
#include <map>
#include <string>

#include "allnc/errors.hpp"
#include "allnc/etf.hpp"

namespace allnc::loss {

void LossConfig::validate() const {
    if (!(alpha >= 0.0)) throw ContractError("alpha must be >= 0");
    if (!(gamma > 0.0)) throw ContractError("gamma must be > 0");
    if (t_max < 1) throw ContractError("t_max must be >= 1");
    if (class_weights.empty()) return;
    double mean = 0.0;
    for (double w : class_weights) {
        if (!(w > 0.0)) throw ContractError("class weights must be positive");
        mean += w;
    }
    mean /= static_cast<double>(class_weights.size());
    if (std::abs(mean - 1.0) > 1e-9) throw ContractError("class weights must have mean 1");
}

std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts) {
    if (counts.empty()) throw ContractError("inverse_frequency_weights: no classes");
    double total = 0.0;
    for (std::size_t n : counts) {
        if (n == 0) throw ContractError("inverse_frequency_weights: class with zero samples");
        total += static_cast<double>(n);
    }
    const double c = static_cast<double>(counts.size());
    std::vector<double> w(counts.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        w[i] = total / (c * static_cast<double>(counts[i]));
        mean += w[i];
    }
    mean /= c;
    for (double& v : w) v /= mean;
    return w;
}

namespace {

void check_labels(const Tensor& logits, std::span<const std::size_t> labels) {
    if (labels.size() != logits.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(logits.rows()) + " rows of logits");
    }
    for (std::size_t y : labels) {
        if (y >= logits.cols()) {
            throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                std::to_string(logits.cols()) + ")");
        }
    }
}

}  // namespace

ad::Var per_sample_cross_entropy(ad::Var logits, std::span<const std::size_t> labels) {
    check_labels(logits.value(), labels);
    return ad::scale(ad::pick(ad::log_softmax_rows(logits), labels), -1.0);
}

ad::Var cross_entropy(ad::Var logits, std::span<const std::size_t> labels) {
    return ad::mean(per_sample_cross_entropy(logits, labels));
}

ad::Var reweighted_ce(ad::Var logits, std::span<const std::size_t> labels, std::span<const double> class_weights) {
    ad::Var ce = per_sample_cross_entropy(logits, labels);
    if (class_weights.empty()) return ad::mean(ce);
    if (class_weights.size() != logits.value().cols()) {
        throw DimensionError("reweighted_ce: " + std::to_string(class_weights.size()) + " weights for " +
                             std::to_string(logits.value().cols()) + " classes");
    }
    Tensor w(Shape{labels.size()}, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = class_weights[labels[i]];
    return ad::mean(ad::mul(ce, logits.tape().constant(std::move(w))));
}

ad::Var class_mean_rows(ad::Var z, std::span<const std::size_t> labels) {
    const std::size_t n = z.value().rows();
    if (labels.size() != n) throw DimensionError("class_mean_rows: label count does not match rows");
    std::map<std::size_t, std::size_t> count;
    for (std::size_t y : labels) ++count[y];
    Tensor avg = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double inv = 1.0 / static_cast<double>(count[labels[i]]);
        for (std::size_t j = 0; j < n; ++j)
            if (labels[j] == labels[i]) avg(i, j) = inv;
    }
    ad::Var out = ad::matmul(z.tape().constant(std::move(avg)), z);
    return out;
}

ad::Var batch_class_means(ad::Var features, std::span<const std::size_t> labels) {
    const std::size_t n = features.value().rows();
    if (labels.size() != n) throw DimensionError("batch_class_means: label count does not match rows");
    std::map<std::size_t, std::size_t> count;
    for (std::size_t y : labels) ++count[y];
    std::map<std::size_t, std::size_t> slot;
    for (const auto& [y, _] : count) slot.emplace(y, slot.size());
    Tensor avg = Tensor::matrix(count.size(), n);
    for (std::size_t j = 0; j < n; ++j) avg(slot[labels[j]], j) = 1.0 / static_cast<double>(count[labels[j]]);
    return ad::matmul(features.tape().constant(std::move(avg)), features);
}

namespace {

ad::Var as_rows(ad::Var v) {
    const Tensor& t = v.value();
    if (t.rank() == 2) return v;
    // Rank-1 input is one sample.
    return ad::reshape(v, Shape{1, t.size()});
}

// -(h^ . z^) - (u^ . z^) per row, with z already stopped.
ad::Var sim_rows(ad::Var h, ad::Var u, ad::Var z_stopped) {
    ad::Var zn = ad::normalize_rows(z_stopped);
    ad::Var s = ad::add(ad::rowwise_dot(ad::normalize_rows(h), zn), ad::rowwise_dot(ad::normalize_rows(u), zn));
    return ad::scale(s, -1.0);
}

}  // namespace

ad::Var hycon(ad::Var h1, ad::Var h2, ad::Var z1, ad::Var z2, ad::Var u1, ad::Var u2) {
    h1 = as_rows(h1);
    h2 = as_rows(h2);
    z1 = as_rows(z1);
    z2 = as_rows(z2);
    u1 = as_rows(u1);
    u2 = as_rows(u2);
    const Shape& s = h1.value().shape();
    for (const ad::Var* v : {&h2, &z1, &z2, &u1, &u2}) {
        if (v->value().shape() != s) throw DimensionError("hycon: operand shapes differ");
    }
    ad::Var first = sim_rows(h1, u2, ad::stop_gradient(z2));
    ad::Var second = sim_rows(h2, u1, ad::stop_gradient(z1));
    return ad::mean(ad::add(first, second));
}

ad::Var p2p(ad::Var vectors, bool center_and_normalize) {
    const std::size_t c = vectors.value().rows();
    if (c < 2) throw DomainError("p2p: need at least 2 rows, got " + std::to_string(c));
    ad::Var v = vectors;
    if (center_and_normalize) v = ad::normalize_rows(ad::sub_row(v, ad::mean_rows(v)));
    ad::Var gram = ad::matmul(v, ad::transpose(v));
    ad::Var diff = ad::sub(gram, vectors.tape().constant(etf::target_gram(c)));
    return ad::scale(ad::sum_squares(diff), 1.0 / static_cast<double>(c * c));
}

double eta(std::size_t epoch, std::size_t t_max, double gamma) {
    if (t_max < 1) throw ContractError("eta: t_max must be >= 1");
    if (epoch > t_max) {
        throw ContractError("eta: epoch " + std::to_string(epoch) + " beyond t_max " + std::to_string(t_max));
    }
    if (!(gamma > 0.0)) throw ContractError("eta: gamma must be > 0");
    return 1.0 - std::pow(static_cast<double>(epoch) / static_cast<double>(t_max), gamma);
}

BranchTerms branch_loss(ad::Var logits, std::span<const std::size_t> labels, double eta_value,
                        std::span<const double> class_weights, ad::Var classifier, bool include_p2p_w) {
    if (!(eta_value >= 0.0 && eta_value <= 1.0)) throw ContractError("branch_loss: eta outside [0, 1]");
    BranchTerms t;
    t.ce = cross_entropy(logits, labels);
    t.re = reweighted_ce(logits, labels, class_weights);
    ad::Var rebalance = t.re;
    if (include_p2p_w) {
        t.p2p_w = p2p(classifier, false);
        rebalance = ad::add(rebalance, t.p2p_w);
    }
    t.total = ad::add(ad::scale(t.ce, eta_value), ad::scale(rebalance, 1.0 - eta_value));
    return t;
}

ad::Var total_loss(ad::Var branch1, ad::Var branch2, ad::Var hycon_value, ad::Var p2p_mu_value, double alpha) {
    if (!(alpha >= 0.0)) throw ContractError("total_loss: alpha must be >= 0");
    return ad::add(ad::add(branch1, branch2), ad::scale(ad::add(hycon_value, p2p_mu_value), alpha));
}

}  // namespace allnc::loss
