#include "allnc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "allnc/csv.hpp"
#include "allnc/errors.hpp"
#include "allnc/etf.hpp"

namespace allnc::data {

std::vector<std::size_t> Dataset::counts() const {
    std::vector<std::size_t> c(classes, 0);
    for (std::size_t y : labels) ++c[y];
    return c;
}

std::vector<std::size_t> long_tail_counts(const LongTailSpec& spec) {
    if (spec.classes < 1) throw SpecError("long_tail_counts: need at least one class");
    if (spec.n_max < 1) throw SpecError("long_tail_counts: n_max must be >= 1");
    if (!(spec.beta >= 1.0)) throw SpecError("long_tail_counts: beta must be >= 1");
    std::vector<std::size_t> out(spec.classes);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const double frac = spec.classes == 1 ? 0.0 : static_cast<double>(c) / static_cast<double>(spec.classes - 1);
        const double n = std::floor(static_cast<double>(spec.n_max) * std::pow(spec.beta, -frac) + 0.5);
        if (n < 1.0) {
            throw SpecError("long_tail_counts: class " + std::to_string(c + 1) + " rounds to zero samples (beta " +
                            std::to_string(spec.beta) + " too large for n_max " + std::to_string(spec.n_max) + ")");
        }
        out[c] = static_cast<std::size_t>(n);
    }
    return out;
}

Tensor class_means(const SyntheticSpec& spec) {
    Tensor means = Tensor::matrix(spec.classes, spec.dim);
    if (spec.placement == MeanPlacement::etf) {
        const etf::EtfFrame frame = etf::make_etf(spec.dim, spec.classes, spec.mean_seed);
        for (std::size_t c = 0; c < spec.classes; ++c)
            for (std::size_t j = 0; j < spec.dim; ++j) means(c, j) = spec.radius * frame.vertices(j, c);
        return means;
    }
    std::mt19937_64 rng(spec.mean_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        auto row = means.row(c);
        double nrm = 0.0;
        do {
            nrm = 0.0;
            for (double& v : row) {
                v = normal(rng);
                nrm += v * v;
            }
        } while (nrm == 0.0);
        nrm = std::sqrt(nrm);
        for (double& v : row) v *= spec.radius / nrm;
    }
    return means;
}

Dataset gen_gaussian_mixture(const SyntheticSpec& spec, std::span<const std::size_t> counts, std::uint64_t seed) {
    if (counts.size() != spec.classes) {
        throw DimensionError("gen_gaussian_mixture: " + std::to_string(counts.size()) + " counts for " +
                             std::to_string(spec.classes) + " classes");
    }
    const Tensor means = class_means(spec);
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    Dataset ds;
    ds.classes = spec.classes;
    ds.x = Tensor::matrix(total, spec.dim);
    ds.labels.reserve(total);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t r = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i, ++r) {
            auto row = ds.x.row(r);
            for (std::size_t j = 0; j < spec.dim; ++j) row[j] = means(c, j) + spec.noise_std * normal(rng);
            ds.labels.push_back(c);
        }
    }
    return ds;
}

ViewAugmenter::ViewAugmenter(double noise_std, double mask_prob, std::uint64_t seed)
    : noise_std_(noise_std), mask_prob_(mask_prob), rng_(seed) {
    if (noise_std < 0.0) throw ContractError("ViewAugmenter: noise std must be >= 0");
    if (mask_prob < 0.0 || mask_prob > 1.0) throw ContractError("ViewAugmenter: mask probability outside [0, 1]");
}

void ViewAugmenter::augment(std::span<double> v) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (noise_std_ > 0.0)
        for (double& x : v) x += noise_std_ * normal(rng_);
    if (mask_prob_ > 0.0)
        for (double& x : v)
            if (unit(rng_) < mask_prob_) x = 0.0;
}

std::pair<Tensor, Tensor> ViewAugmenter::two_views(std::span<const double> sample) {
    Tensor a = Tensor::vector(std::vector<double>(sample.begin(), sample.end()));
    Tensor b = a;
    augment(a.data());
    augment(b.data());
    return {std::move(a), std::move(b)};
}

std::pair<Tensor, Tensor> ViewAugmenter::two_views(const Tensor& batch) {
    Tensor a = batch;
    Tensor b = batch;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        augment(a.row(r));
        augment(b.row(r));
    }
    return {std::move(a), std::move(b)};
}

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 1) throw ContractError("batches: batch size must be >= 1");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        Batch b;
        b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
        b.x = rows_subset(dataset.x, b.indices);
        b.labels.reserve(b.indices.size());
        for (std::size_t i : b.indices) b.labels.push_back(dataset.labels[i]);
        out.push_back(std::move(b));
    }
    return out;
}

Dataset load_csv(const std::filesystem::path& path) {
    const io::CsvTable table = io::read_csv(path);
    const std::size_t width = table.rows.front().size();
    if (width < 2) throw ParseError(path.string() + ": need at least one feature column and a label", table.lines[0]);
    const std::size_t d = width - 1;
    Dataset ds;
    ds.x = Tensor::matrix(table.rows.size(), d);
    std::vector<long long> raw(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d), ds.x.row(r).begin());
        const double lbl = row[d];
        if (!(std::floor(lbl) == lbl) || lbl < 0) {
            throw ParseError(path.string() + ": label must be a non-negative integer", table.lines[r]);
        }
        raw[r] = static_cast<long long>(lbl);
    }
    const std::set<long long> distinct(raw.begin(), raw.end());
    const long long lo = *distinct.begin(), hi = *distinct.rbegin();
    if (lo != 0 && lo != 1) throw ParseError(path.string() + ": labels must start at 0 or 1", 0);
    if (static_cast<long long>(distinct.size()) != hi - lo + 1) {
        throw ParseError(path.string() + ": labels are not contiguous from " + std::to_string(lo), 0);
    }
    ds.label_base = static_cast<int>(lo);
    ds.classes = static_cast<std::size_t>(hi - lo + 1);
    ds.labels.reserve(raw.size());
    for (long long v : raw) ds.labels.push_back(static_cast<std::size_t>(v - lo));
    return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::vector<std::string> header;
    for (std::size_t j = 0; j < dataset.dim(); ++j) header.push_back("x" + std::to_string(j + 1));
    header.emplace_back("label");
    std::vector<double> labels(dataset.labels.begin(), dataset.labels.end());
    for (double& l : labels) l += 1.0;
    io::write_matrix_csv(path, header, dataset.x, &labels);
}

}  // namespace allnc::data
