#pragma once

// Training objectives as graph-building functions on an ad::Tape.
//
// Batch losses are arithmetic means over samples. Labels are 0-based.

#include <cstddef>
#include <span>
#include <vector>

#include "allnc/autodiff.hpp"

namespace allnc::loss {

struct LossConfig {
    double alpha = 1.0;
    double gamma = 2.0;
    std::size_t t_max = 100;
    // Positive, mean 1. Empty means all ones.
    std::vector<double> class_weights;

    // Throws ContractError naming the offending field.
    void validate() const;
};

// w_c proportional to N / (C * n_c), rescaled to mean 1. Every count must
// be positive.
std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts);

// -log softmax(logits)[label] per row, shape {N}. logits is N x C or a
// single C-vector.
ad::Var per_sample_cross_entropy(ad::Var logits, std::span<const std::size_t> labels);

ad::Var cross_entropy(ad::Var logits, std::span<const std::size_t> labels);

// Mean of class_weights[label] * CE.
ad::Var reweighted_ce(ad::Var logits, std::span<const std::size_t> labels, std::span<const double> class_weights);

// Row i is the mean of the rows of z that share label[i], anchor included.
// The mean stays differentiable.
ad::Var class_mean_rows(ad::Var z, std::span<const std::size_t> labels);

// Means of the rows of each class present in labels, ordered by class
// index; shape C_present x d.
ad::Var batch_class_means(ad::Var features, std::span<const std::size_t> labels);

/// Negative-free hybrid contrastive loss.
///
/// Averages sim(h1, u2, sg(z2)) + sim(h2, u1, sg(z1)) over rows, where
/// sim(h, u, z) = -<h^, z^> - <u^, z^> with ^ the l2 normalization.
/// Gradient never reaches z1 or z2 through this loss. Value lies in [-4, 4].
/// Throws DegenerateInputError if any row is zero.
ad::Var hycon(ad::Var h1, ad::Var h2, ad::Var z1, ad::Var z2, ad::Var u1, ad::Var u2);

/// Peer-to-peer Gram alignment: (1/C^2) sum_ij (v_i . v_j - rho_ij)^2 over
/// the C rows. With center_and_normalize the rows are first centered by
/// their mean and l2-normalized (class-mean form); otherwise they are used
/// as-is (classifier form).
ad::Var p2p(ad::Var vectors, bool center_and_normalize);

// 1 - (epoch / t_max)^gamma. Throws ContractError outside 0 <= epoch <= t_max.
double eta(std::size_t epoch, std::size_t t_max, double gamma);

struct BranchTerms {
    ad::Var total;
    ad::Var ce;
    ad::Var re;
    ad::Var p2p_w;  // invalid when the classifier term is disabled
};

// eta * CE + (1 - eta) * (reweighted CE + p2p(W)).
BranchTerms branch_loss(ad::Var logits, std::span<const std::size_t> labels, double eta_value,
                        std::span<const double> class_weights, ad::Var classifier, bool include_p2p_w = true);

// branch1 + branch2 + alpha * (hycon + p2p_mu)
ad::Var total_loss(ad::Var branch1, ad::Var branch2, ad::Var hycon_value, ad::Var p2p_mu_value, double alpha);

}  // namespace allnc::loss
