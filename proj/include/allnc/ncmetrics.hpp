#pragma once

// Neural-collapse diagnostics over a batch of last-layer features.
//
// Labels are 0-based class indices throughout. Classes with no samples in
// the batch are marked absent; every diagnostic is then computed over the
// present classes only and the report records the partial coverage.

#include <cstddef>
#include <span>
#include <vector>

#include "allnc/tensor.hpp"

namespace allnc::nc {

struct ClassStats {
    std::size_t classes = 0;
    Tensor means;        // C x d; rows of absent classes are left at zero
    Tensor global_mean;  // d, mean over all samples
    std::vector<std::size_t> counts;

    bool present(std::size_t c) const { return counts[c] > 0; }
    std::vector<std::size_t> present_classes() const;
    bool all_present() const;
};

struct NCReport {
    double nc1 = 0.0;
    Tensor icpa_mu;  // degrees, over present classes
    Tensor icpa_w;
    double std_cos_mu = 0.0;
    double std_cos_w = 0.0;
    double delta = 0.0;
    double ncc_agreement = 0.0;
    std::vector<std::size_t> classes_present;
    bool partial_coverage = false;
};

// Throws ContractError on an empty batch or a label >= classes.
ClassStats class_stats(const Tensor& features, std::span<const std::size_t> labels, std::size_t classes);

// trace(Sigma_W): mean squared distance of each sample to its class mean.
double nc1_within_class(const Tensor& features, std::span<const std::size_t> labels, const ClassStats& stats);

// Cosines between rows after subtracting center. Throws DegenerateInputError
// naming the row when a centered row is zero.
Tensor centered_pairwise_cosines(const Tensor& vectors, std::span<const double> center);

// Population standard deviation of the strictly-upper-triangular entries.
double std_of_pairwise_cosines(const Tensor& cosines);

// Elementwise arccos in degrees with a zero diagonal.
Tensor icpa_degrees(const Tensor& cosines);

// Frobenius gap between the normalized classifier rows and the normalized
// centered class means, both stacked class-by-row over present classes.
double self_duality_delta(const Tensor& weights, const ClassStats& stats);

// Fraction of samples whose linear prediction equals the nearest class mean.
// Ties go to the lowest class index on both sides.
double ncc_agreement(const Tensor& features, const Tensor& weights, std::span<const double> bias,
                     const ClassStats& stats);

// Mean of the classifier rows of the given classes.
std::vector<double> mean_of_rows(const Tensor& m, std::span<const std::size_t> rows);

NCReport compute_report(const Tensor& features, std::span<const std::size_t> labels, const Tensor& weights,
                        std::span<const double> bias, std::size_t classes);

}  // namespace allnc::nc
