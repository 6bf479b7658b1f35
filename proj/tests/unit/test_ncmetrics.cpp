#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "allnc/errors.hpp"
#include "allnc/etf.hpp"
#include "allnc/ncmetrics.hpp"

using namespace allnc;

namespace {

Tensor randn(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Tensor t = Tensor::matrix(r, c);
    for (auto& v : t.data()) v = g(rng);
    return t;
}

// Rows are ETF vertices (C x q).
Tensor etf_rows(std::size_t q, std::size_t c, std::uint64_t seed) {
    return transpose(etf::make_etf(q, c, seed).vertices);
}

std::vector<std::size_t> iota_labels(std::size_t n) {
    std::vector<std::size_t> l(n);
    std::iota(l.begin(), l.end(), 0);
    return l;
}

}  // namespace

TEST_CASE("class_stats") {
    const Tensor f = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
    const auto s = nc::class_stats(f, iota_labels(3), 3);
    CHECK(s.means == f);
    CHECK(s.all_present());

    const Tensor pm = Tensor::matrix({{2, 1}, {0, 3}});
    const std::vector<std::size_t> l{0, 0};
    const auto s2 = nc::class_stats(pm, l, 2);
    CHECK(s2.means(0, 0) == 1.0);
    CHECK(s2.means(0, 1) == 2.0);
    CHECK_FALSE(s2.present(1));
    CHECK(s2.present_classes() == std::vector<std::size_t>{0});

    std::mt19937_64 rng(1);
    const Tensor x = randn(50, 4, rng);
    std::vector<std::size_t> lab(50);
    for (std::size_t i = 0; i < 50; ++i) lab[i] = (i * 7) % 5;
    const auto s3 = nc::class_stats(x, lab, 5);
    for (std::size_t j = 0; j < 4; ++j) {
        double w = 0;
        for (std::size_t c = 0; c < 5; ++c) w += s3.means(c, j) * static_cast<double>(s3.counts[c]);
        CHECK(std::abs(w / 50.0 - s3.global_mean[j]) < 1e-12);
    }
    CHECK_THROWS_AS(nc::class_stats(Tensor::matrix(0, 2), std::vector<std::size_t>{}, 2), ContractError);
    CHECK_THROWS_AS(nc::class_stats(f, std::vector<std::size_t>{0, 1, 3}, 3), ContractError);
}

TEST_CASE("nc1") {
    const Tensor at_means = Tensor::matrix({{1, 1}, {1, 1}, {-2, 0}});
    const std::vector<std::size_t> l{0, 0, 1};
    CHECK(nc::nc1_within_class(at_means, l, nc::class_stats(at_means, l, 2)) == 0.0);

    // mu +/- d per class: trace = |d|^2
    const Tensor pm = Tensor::matrix({{1 + 3, 2 + 4}, {1 - 3, 2 - 4}, {-5 + 3, 0 + 4}, {-5 - 3, 0 - 4}});
    const std::vector<std::size_t> l2{0, 0, 1, 1};
    CHECK(std::abs(nc::nc1_within_class(pm, l2, nc::class_stats(pm, l2, 2)) - 25.0) < 1e-12);

    std::mt19937_64 rng(2);
    Tensor x = randn(40, 6, rng);
    std::vector<std::size_t> lab(40);
    for (std::size_t i = 0; i < 40; ++i) lab[i] = i % 4;
    const double base = nc::nc1_within_class(x, lab, nc::class_stats(x, lab, 4));
    Tensor shifted = x;
    for (std::size_t i = 0; i < 40; ++i) for (std::size_t j = 0; j < 6; ++j) shifted(i, j) += 3.0 * j - 1.0;
    CHECK(std::abs(nc::nc1_within_class(shifted, lab, nc::class_stats(shifted, lab, 4)) - base) < 1e-9);
    const Tensor q = transpose(etf::orthonormalize_columns(randn(6, 6, rng)));
    const Tensor rot = matmul(x, q);
    CHECK(std::abs(nc::nc1_within_class(rot, lab, nc::class_stats(rot, lab, 4)) - base) < 1e-9);
}

TEST_CASE("centered cosines and their std") {
    const Tensor v = etf_rows(12, 10, 1);
    const std::vector<double> zero(12, 0.0);
    const Tensor cos = nc::centered_pairwise_cosines(v, zero);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            CHECK(std::abs(cos(i, j) - (i == j ? 1.0 : -1.0 / 9.0)) < 1e-12);
    CHECK(nc::std_of_pairwise_cosines(cos) < 1e-12);
    const Tensor ang = nc::icpa_degrees(cos);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            CHECK(std::abs(ang(i, j) - (i == j ? 0.0 : etf::optimal_icpa_degrees(10))) < 1e-6);

    const Tensor two = Tensor::matrix({{1, 5}, {3, -1}});
    const std::vector<double> mid{2, 2};
    CHECK(std::abs(nc::centered_pairwise_cosines(two, mid)(0, 1) + 1.0) < 1e-12);

    const Tensor c3 = Tensor::matrix({{1, 0, 0}, {0, 1, 1}, {0, 1, 1}});
    CHECK(std::abs(nc::std_of_pairwise_cosines(c3) - std::sqrt(2.0) / 3.0) < 1e-15);
    CHECK(nc::std_of_pairwise_cosines(Tensor::matrix({{1, 0.3}, {0.3, 1}})) == 0.0);

    std::mt19937_64 rng(3);
    const Tensor r = randn(7, 5, rng);
    const std::vector<double> ctr{0.1, -0.2, 0.3, 0, 0};
    const Tensor rc = nc::centered_pairwise_cosines(r, ctr);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(std::abs(rc(i, i) - 1.0) < 1e-14);
        for (std::size_t j = 0; j < 7; ++j) CHECK(rc(i, j) == rc(j, i));
    }
    const double s0 = nc::std_of_pairwise_cosines(nc::centered_pairwise_cosines(r, std::vector<double>(5, 0.0)));
    const Tensor q = transpose(etf::orthonormalize_columns(randn(5, 5, rng)));
    Tensor rs = matmul(r, q);
    for (auto& x : rs.data()) x *= 3.5;
    CHECK(std::abs(nc::std_of_pairwise_cosines(nc::centered_pairwise_cosines(rs, std::vector<double>(5, 0.0))) - s0) <
          1e-12);

    const Tensor zr = Tensor::matrix({{1, 1}, {2, 2}});
    CHECK_THROWS_AS(nc::centered_pairwise_cosines(zr, std::vector<double>{1, 1}), DegenerateInputError);
}

TEST_CASE("self-duality delta") {
    std::mt19937_64 rng(4);
    const Tensor f = randn(12, 5, rng);
    std::vector<std::size_t> lab(12);
    for (std::size_t i = 0; i < 12; ++i) lab[i] = i % 4;
    const auto s = nc::class_stats(f, lab, 4);
    Tensor centered = s.means;
    for (std::size_t c = 0; c < 4; ++c) for (std::size_t j = 0; j < 5; ++j) centered(c, j) -= s.global_mean[j];

    CHECK(nc::self_duality_delta(centered, s) < 1e-12);
    for (double k : {0.1, 1.0, 10.0}) {
        Tensor w = centered;
        for (auto& x : w.data()) x *= k;
        CHECK(nc::self_duality_delta(w, s) < 1e-12);
    }
    Tensor neg = centered;
    for (auto& x : neg.data()) x = -x;
    CHECK(std::abs(nc::self_duality_delta(neg, s) - 2.0) < 1e-12);

    const Tensor w = randn(4, 5, rng);
    const double d0 = nc::self_duality_delta(w, s);
    for (double k : {0.1, 10.0}) {
        Tensor ws = w;
        for (auto& x : ws.data()) x *= k;
        CHECK(std::abs(nc::self_duality_delta(ws, s) - d0) < 1e-12);
        Tensor fs = f;
        for (auto& x : fs.data()) x *= k;
        CHECK(std::abs(nc::self_duality_delta(w, nc::class_stats(fs, lab, 4)) - d0) < 1e-12);
    }
    CHECK_THROWS_AS(nc::self_duality_delta(Tensor::matrix(4, 5), s), DegenerateInputError);
}

TEST_CASE("ncc agreement") {
    const Tensor means = etf_rows(10, 10, 2);
    const auto lab = iota_labels(10);
    const auto s = nc::class_stats(means, lab, 10);
    const std::vector<double> b(10, 0.0);
    CHECK(nc::ncc_agreement(means, means, b, s) == 1.0);

    // W a permutation of the means: agreement = fixed points / C.
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::size_t> perm = iota_labels(10);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor w = Tensor::matrix(10, 10);
        std::size_t fixed = 0;
        for (std::size_t c = 0; c < 10; ++c) {
            std::copy(means.row(perm[c]).begin(), means.row(perm[c]).end(), w.row(c).begin());
            fixed += perm[c] == c ? 1 : 0;
        }
        CHECK(nc::ncc_agreement(means, w, b, s) == doctest::Approx(fixed / 10.0).epsilon(1e-15));
    }

    const Tensor one = Tensor::matrix({{0.3, -0.1}});
    const auto s1 = nc::class_stats(one, std::vector<std::size_t>{0}, 2);
    const double a = nc::ncc_agreement(one, randn(2, 2, rng), std::vector<double>{0, 0}, s1);
    CHECK((a == 0.0 || a == 1.0));
}

TEST_CASE("report on exact collapse and partial coverage") {
    const Tensor means = etf_rows(12, 10, 3);
    Tensor f = Tensor::matrix(30, 12);
    std::vector<std::size_t> lab(30);
    for (std::size_t i = 0; i < 30; ++i) {
        lab[i] = i % 10;
        std::copy(means.row(lab[i]).begin(), means.row(lab[i]).end(), f.row(i).begin());
    }
    const auto r = nc::compute_report(f, lab, means, std::vector<double>(10, 0.0), 10);
    CHECK(r.nc1 < 1e-20);
    CHECK(r.std_cos_mu < 1e-12);
    CHECK(r.std_cos_w < 1e-12);
    CHECK(r.delta < 1e-12);
    CHECK(r.ncc_agreement == 1.0);
    CHECK_FALSE(r.partial_coverage);
    for (std::size_t i = 0; i < 10; ++i) CHECK(r.icpa_mu(i, i) == 0.0);

    std::vector<std::size_t> lab3(30);
    for (std::size_t i = 0; i < 30; ++i) lab3[i] = i % 3;
    const auto p = nc::compute_report(f, lab3, means, std::vector<double>(10, 0.0), 10);
    CHECK(p.partial_coverage);
    CHECK(p.classes_present.size() == 3);
    CHECK(p.icpa_mu.rows() == 3);
    CHECK(p.delta >= 0.0);
}
