#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "allnc/tensor.hpp"

namespace allnc::data {

struct Dataset {
    Tensor x;                         // N x dim
    std::vector<std::size_t> labels;  // 0-based
    std::size_t classes = 0;
    // Smallest label in the external file (0 or 1); exports use 1.
    int label_base = 1;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return x.cols(); }
    std::vector<std::size_t> counts() const;
};

struct LongTailSpec {
    std::size_t classes = 10;
    std::size_t n_max = 500;
    double beta = 100.0;  // N_max / N_min
};

/// n_c = round(n_max * beta^(-c/(C-1))) for 0-based c, rounding half up.
/// Throws SpecError if beta < 1, n_max < 1, or some class rounds below 1.
std::vector<std::size_t> long_tail_counts(const LongTailSpec& spec);

enum class MeanPlacement { etf, random };

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t dim = 32;
    MeanPlacement placement = MeanPlacement::etf;
    double radius = 4.0;
    double noise_std = 1.0;
    std::uint64_t mean_seed = 0;
};

// C x dim class centres at distance radius from the origin. The ETF
// placement needs dim >= C.
Tensor class_means(const SyntheticSpec& spec);

// count_c draws of mean_c + N(0, noise_std^2 I) per class, class-ordered.
Dataset gen_gaussian_mixture(const SyntheticSpec& spec, std::span<const std::size_t> counts, std::uint64_t seed);

/// Stochastic second-view generator: additive Gaussian noise, then each
/// coordinate zeroed with probability mask_prob.
class ViewAugmenter {
public:
    ViewAugmenter(double noise_std, double mask_prob, std::uint64_t seed);

    std::pair<Tensor, Tensor> two_views(std::span<const double> sample);
    // Views of every row of a batch, drawn row by row.
    std::pair<Tensor, Tensor> two_views(const Tensor& batch);

private:
    void augment(std::span<double> v);

    double noise_std_;
    double mask_prob_;
    std::mt19937_64 rng_;
};

struct Batch {
    Tensor x;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> indices;  // rows of the source dataset
};

// Seeded per-epoch shuffle cut into batches; the last one may be short.
std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

/// Rows are feature columns then an integer label; header optional.
/// Labels must cover base..max without gaps, base being 0 or 1.
Dataset load_csv(const std::filesystem::path& path);

// Header x1..xd,label; labels written 1-based.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace allnc::data
