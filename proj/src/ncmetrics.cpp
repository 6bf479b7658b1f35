#include "allnc/ncmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "allnc/errors.hpp"
#include "allnc/kernels.hpp"

namespace allnc::nc {

std::vector<std::size_t> ClassStats::present_classes() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < classes; ++c)
        if (counts[c] > 0) out.push_back(c);
    return out;
}

bool ClassStats::all_present() const {
    return std::all_of(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; });
}

ClassStats class_stats(const Tensor& features, std::span<const std::size_t> labels, std::size_t classes) {
    const std::size_t n = features.rows(), d = features.cols();
    if (n == 0 || labels.empty()) throw ContractError("class_stats: empty batch");
    if (labels.size() != n) {
        throw DimensionError("class_stats: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " feature rows");
    }
    ClassStats s;
    s.classes = classes;
    s.means = Tensor::matrix(classes, d);
    s.global_mean = Tensor(Shape{d}, 0.0);
    s.counts.assign(classes, 0);
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = labels[i];
        if (y >= classes) {
            throw ContractError("class_stats: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) +
                                ")");
        }
        ++s.counts[y];
        k.axpy(1.0, features.row(i).data(), s.means.row(y).data(), d);
        k.axpy(1.0, features.row(i).data(), s.global_mean.data().data(), d);
    }
    for (std::size_t c = 0; c < classes; ++c)
        if (s.counts[c] > 0) k.scal(1.0 / static_cast<double>(s.counts[c]), s.means.row(c).data(), d);
    k.scal(1.0 / static_cast<double>(n), s.global_mean.data().data(), d);
    return s;
}

double nc1_within_class(const Tensor& features, std::span<const std::size_t> labels, const ClassStats& stats) {
    const std::size_t n = features.rows(), d = features.cols();
    const auto& k = kernels::active();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += k.sq_dist(features.row(i).data(), stats.means.row(labels[i]).data(), d);
    return acc / static_cast<double>(n);
}

Tensor centered_pairwise_cosines(const Tensor& vectors, std::span<const double> center) {
    const std::size_t c = vectors.rows(), d = vectors.cols();
    if (center.size() != d) throw DimensionError("centered_pairwise_cosines: center has wrong length");
    const auto& k = kernels::active();
    Tensor unit = vectors;
    for (std::size_t i = 0; i < c; ++i) {
        double* row = unit.row(i).data();
        k.axpy(-1.0, center.data(), row, d);
        const double nrm = std::sqrt(k.dot(row, row, d));
        if (nrm == 0.0) {
            throw DegenerateInputError("centered_pairwise_cosines: row " + std::to_string(i) +
                                       " coincides with the center");
        }
        k.scal(1.0 / nrm, row, d);
    }
    Tensor cos = Tensor::matrix(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        cos(i, i) = 1.0;
        for (std::size_t j = i + 1; j < c; ++j) {
            const double v = std::clamp(k.dot(unit.row(i).data(), unit.row(j).data(), d), -1.0, 1.0);
            cos(i, j) = v;
            cos(j, i) = v;
        }
    }
    return cos;
}

double std_of_pairwise_cosines(const Tensor& cosines) {
    const std::size_t c = cosines.rows();
    if (c < 3) return 0.0;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j, ++pairs) sum += cosines(i, j);
    const double mean = sum / static_cast<double>(pairs);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j) var += (cosines(i, j) - mean) * (cosines(i, j) - mean);
    return std::sqrt(var / static_cast<double>(pairs));
}

Tensor icpa_degrees(const Tensor& cosines) {
    Tensor out = cosines;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) = i == j ? 0.0 : std::acos(std::clamp(cosines(i, j), -1.0, 1.0)) * 180.0 / std::numbers::pi;
        }
    }
    return out;
}

std::vector<double> mean_of_rows(const Tensor& m, std::span<const std::size_t> rows) {
    std::vector<double> out(m.cols(), 0.0);
    if (rows.empty()) return out;
    const auto& k = kernels::active();
    for (std::size_t r : rows) k.axpy(1.0, m.row(r).data(), out.data(), out.size());
    k.scal(1.0 / static_cast<double>(rows.size()), out.data(), out.size());
    return out;
}

double self_duality_delta(const Tensor& weights, const ClassStats& stats) {
    if (weights.rows() != stats.classes || weights.cols() != stats.means.cols()) {
        throw DimensionError("self_duality_delta: weights " + shape_string(weights.shape()) + " vs " +
                             std::to_string(stats.classes) + " classes of dimension " +
                             std::to_string(stats.means.cols()));
    }
    const auto present = stats.present_classes();
    const std::size_t d = weights.cols();
    Tensor a = rows_subset(weights, present);
    Tensor b = rows_subset(stats.means, present);
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < b.rows(); ++r) k.axpy(-1.0, stats.global_mean.data().data(), b.row(r).data(), d);
    const double na = frobenius_norm(a), nb = frobenius_norm(b);
    if (na == 0.0) throw DegenerateInputError("self_duality_delta: classifier matrix has zero norm");
    if (nb == 0.0) throw DegenerateInputError("self_duality_delta: centered class means have zero norm");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] / na - b[i] / nb;
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double ncc_agreement(const Tensor& features, const Tensor& weights, std::span<const double> bias,
                     const ClassStats& stats) {
    const std::size_t n = features.rows(), d = features.cols();
    if (weights.cols() != d || weights.rows() != stats.classes) {
        throw DimensionError("ncc_agreement: weights " + shape_string(weights.shape()) + " do not match features");
    }
    if (!bias.empty() && bias.size() != stats.classes) throw DimensionError("ncc_agreement: bias length");
    const auto present = stats.present_classes();
    const auto& k = kernels::active();
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* h = features.row(i).data();
        std::size_t best_lin = present.front(), best_ncc = present.front();
        double best_score = -std::numeric_limits<double>::infinity();
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t c : present) {
            const double score = k.dot(weights.row(c).data(), h, d) + (bias.empty() ? 0.0 : bias[c]);
            if (score > best_score) {
                best_score = score;
                best_lin = c;
            }
            const double dist = k.sq_dist(h, stats.means.row(c).data(), d);
            if (dist < best_dist) {
                best_dist = dist;
                best_ncc = c;
            }
        }
        if (best_lin == best_ncc) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(n);
}

NCReport compute_report(const Tensor& features, std::span<const std::size_t> labels, const Tensor& weights,
                        std::span<const double> bias, std::size_t classes) {
    const ClassStats stats = class_stats(features, labels, classes);
    NCReport r;
    r.classes_present = stats.present_classes();
    r.partial_coverage = !stats.all_present();
    r.nc1 = nc1_within_class(features, labels, stats);

    const Tensor mu = rows_subset(stats.means, r.classes_present);
    const Tensor cos_mu = centered_pairwise_cosines(mu, stats.global_mean.data());
    r.icpa_mu = icpa_degrees(cos_mu);
    r.std_cos_mu = std_of_pairwise_cosines(cos_mu);

    const Tensor w = rows_subset(weights, r.classes_present);
    const std::vector<double> w_center = mean_of_rows(w, [&] {
        std::vector<std::size_t> all(w.rows());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }());
    const Tensor cos_w = centered_pairwise_cosines(w, w_center);
    r.icpa_w = icpa_degrees(cos_w);
    r.std_cos_w = std_of_pairwise_cosines(cos_w);

    r.delta = self_duality_delta(weights, stats);
    r.ncc_agreement = ncc_agreement(features, weights, bias, stats);
    return r;
}

}  // namespace allnc::nc
