#include <doctest.h>

#include <cmath>
#include <random>

#include "allnc/errors.hpp"
#include "allnc/etf.hpp"
#include "allnc/gradcheck.hpp"
#include "allnc/losses.hpp"

using namespace allnc;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = g(rng);
    return t;
}

double value(ad::Var v) { return v.value().item(); }

}  // namespace

TEST_CASE("cross entropy values") {
    ad::Tape t;
    const std::vector<std::size_t> l{3};
    CHECK(std::abs(value(loss::cross_entropy(t.constant(Tensor::vector(std::vector<double>(10, 0.7))), l)) -
                   std::log(10.0)) < 1e-14);
    // log(1 + (C-1) e^-20): below 1e-8 for C <= 5
    std::vector<double> margin(4, 0.0);
    margin[3] = 20.0;
    const double v = value(loss::cross_entropy(t.constant(Tensor::vector(margin)), l));
    CHECK(v < 1e-8);
    CHECK(v == doctest::Approx(std::log1p(3.0 * std::exp(-20.0))).epsilon(1e-9));
    const std::vector<std::size_t> bad{10};
    CHECK_THROWS_AS(loss::cross_entropy(t.constant(Tensor::vector(margin)), bad), ContractError);
}

TEST_CASE("cross entropy gradient is softmax minus onehot") {
    std::mt19937_64 rng(1);
    const Tensor z = randn({1, 6}, rng);
    ad::Tape t;
    auto x = t.parameter(z);
    const std::vector<std::size_t> l{2};
    t.backward(loss::cross_entropy(x, l));
    double zsum = 0;
    for (double v : z.data()) zsum += std::exp(v);
    for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(x.grad()[j] - (std::exp(z[j]) / zsum - (j == 2))) < 1e-14);
}

TEST_CASE("reweighted CE") {
    std::mt19937_64 rng(2);
    const Tensor z = randn({5, 4}, rng);
    const std::vector<std::size_t> l{0, 1, 3, 3, 2};
    ad::Tape t;
    auto x = t.constant(z);
    const double ce = value(loss::cross_entropy(x, l));
    CHECK(value(loss::reweighted_ce(x, l, std::vector<double>(4, 1.0))) == doctest::Approx(ce).epsilon(1e-15));
    const std::vector<std::size_t> one{3};
    auto row = t.constant(Tensor::vector({z(2, 0), z(2, 1), z(2, 2), z(2, 3)}));
    CHECK(value(loss::reweighted_ce(row, one, std::vector<double>{1, 1, 1, 2})) ==
          2.0 * value(loss::cross_entropy(row, one)));

    const std::vector<std::size_t> counts{100, 10, 1};
    const auto w = loss::inverse_frequency_weights(counts);
    CHECK((w[0] + w[1] + w[2]) / 3.0 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(w[2] / w[0] == doctest::Approx(100.0).epsilon(1e-12));
    for (double v : loss::inverse_frequency_weights(std::vector<std::size_t>{7, 7, 7})) CHECK(v == 1.0);
}

TEST_CASE("hycon values") {
    ad::Tape t;
    auto e = t.constant(Tensor::vector({0.6, 0.8, 0.0}));
    CHECK(value(loss::hycon(e, e, e, e, e, e)) == -4.0);
    auto a = t.constant(Tensor::vector({1, 0}));
    auto b = t.constant(Tensor::vector({0, 2}));
    // h and u orthogonal to the other view's z
    CHECK(value(loss::hycon(b, b, a, a, b, b)) == 0.0);
    CHECK_THROWS_AS(loss::hycon(a, a, t.constant(Tensor::vector({0, 0})), a, a, a), DegenerateInputError);
}

TEST_CASE("hycon never sends gradient into z") {
    std::mt19937_64 rng(3);
    ad::Tape t;
    auto h1 = t.parameter(randn({4, 5}, rng));
    auto h2 = t.parameter(randn({4, 5}, rng));
    auto z1 = t.parameter(randn({4, 5}, rng));
    auto z2 = t.parameter(randn({4, 5}, rng));
    auto u1 = t.parameter(randn({4, 5}, rng));
    auto u2 = t.parameter(randn({4, 5}, rng));
    t.backward(loss::hycon(h1, h2, z1, z2, u1, u2));
    for (double g : z1.grad().data()) CHECK(g == 0.0);
    for (double g : z2.grad().data()) CHECK(g == 0.0);
    CHECK(frobenius_norm(h1.grad()) > 0.0);
    CHECK(frobenius_norm(u2.grad()) > 0.0);
}

TEST_CASE("hycon is bounded") {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 50; ++k) {
        ad::Tape t;
        auto v = [&] { return t.constant(randn({3, 4}, rng)); };
        const double h = value(loss::hycon(v(), v(), v(), v(), v(), v()));
        CHECK(h >= -4.0);
        CHECK(h <= 4.0);
    }
}

TEST_CASE("class mean rows include the anchor") {
    ad::Tape t;
    auto z = t.constant(Tensor::matrix({{1, 0}, {3, 2}, {5, 5}}));
    const std::vector<std::size_t> l{1, 1, 0};
    const Tensor u = loss::class_mean_rows(z, l).value();
    CHECK(u == Tensor::matrix({{2, 1}, {2, 1}, {5, 5}}));
    const Tensor m = loss::batch_class_means(z, l).value();
    CHECK(m == Tensor::matrix({{5, 5}, {2, 1}}));
}

TEST_CASE("p2p values") {
    ad::Tape t;
    const Tensor v = transpose(etf::make_etf(8, 4, 1).vertices);
    CHECK(value(loss::p2p(t.constant(v), false)) < 1e-20);
    CHECK(value(loss::p2p(t.constant(v), true)) < 1e-20);
    // centered+normalized form is invariant to shift and scale of the ETF
    Tensor vs = v;
    for (std::size_t i = 0; i < 4; ++i) for (std::size_t j = 0; j < 8; ++j) vs(i, j) = 3.0 * vs(i, j) + 0.5 * j;
    CHECK(value(loss::p2p(t.constant(vs), true)) < 1e-20);
    CHECK(value(loss::p2p(t.constant(Tensor::matrix({{1, 0}, {0, 1}})), false)) == 0.5);
    CHECK_THROWS_AS(loss::p2p(t.constant(Tensor::matrix({{1, 1}, {1, 1}})), true), DegenerateInputError);
    CHECK_THROWS_AS(loss::p2p(t.constant(Tensor::matrix({{1, 1}})), false), DomainError);
}

TEST_CASE("joint p2p minimization gives matching Gram matrices") {
    std::mt19937_64 rng(8);
    Tensor mu = randn({4, 8}, rng);
    Tensor w = randn({4, 8}, rng);
    for (int step = 0; step < 20000; ++step) {
        ad::Tape t;
        auto m = t.parameter(mu);
        auto v = t.parameter(w);
        t.backward(ad::add(loss::p2p(m, true), loss::p2p(v, false)));
        for (std::size_t i = 0; i < mu.size(); ++i) {
            mu[i] -= 0.1 * m.grad()[i];
            w[i] -= 0.1 * v.grad()[i];
        }
    }
    // Gram of the centered, normalized means against the raw classifier Gram.
    Tensor c = mu;
    for (std::size_t j = 0; j < 8; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < 4; ++i) s += mu(i, j) / 4.0;
        for (std::size_t i = 0; i < 4; ++i) c(i, j) -= s;
    }
    for (std::size_t i = 0; i < 4; ++i) {
        double n = 0;
        for (double x : c.row(i)) n += x * x;
        for (double& x : c.row(i)) x /= std::sqrt(n);
    }
    CHECK(max_abs_diff(matmul(c, transpose(c)), matmul(w, transpose(w))) < 1e-3);
}

TEST_CASE("loss gradients pass finite differences") {
    std::mt19937_64 rng(5);
    const std::vector<std::size_t> l{0, 2, 1, 2};
    const std::vector<double> w{0.5, 1.0, 1.5};
    for (int k = 0; k < 5; ++k) {
        const std::vector<Tensor> logits{randn({4, 3}, rng)};
        CHECK(grad_check([&](ad::Tape&, std::span<const ad::Var> v) { return loss::cross_entropy(v[0], l); }, logits)
                  .max_rel_error < 1e-5);
        CHECK(grad_check([&](ad::Tape&, std::span<const ad::Var> v) { return loss::reweighted_ce(v[0], l, w); },
                         logits)
                  .max_rel_error < 1e-5);
        const std::vector<Tensor> rows{randn({4, 8}, rng)};
        CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return loss::p2p(v[0], false); }, rows)
                  .max_rel_error < 1e-5);
        CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return loss::p2p(v[0], true); }, rows)
                  .max_rel_error < 1e-5);
        const std::vector<Tensor> hz{randn({4, 5}, rng), randn({4, 5}, rng), randn({4, 5}, rng), randn({4, 5}, rng)};
        auto hyc = [&](ad::Tape&, std::span<const ad::Var> v) {
            return loss::hycon(v[0], v[1], v[2], v[3], loss::class_mean_rows(v[2], l), loss::class_mean_rows(v[3], l));
        };
        CHECK(grad_check(hyc, hz).max_rel_error < 1e-5);
    }
}

TEST_CASE("eta schedule") {
    CHECK(loss::eta(0, 100, 2.0) == 1.0);
    CHECK(loss::eta(100, 100, 2.0) == 0.0);
    CHECK(loss::eta(50, 100, 1.0) == 0.5);
    CHECK(loss::eta(50, 100, 2.0) == 0.75);
    CHECK(loss::eta(50, 100, 2.0) > loss::eta(50, 100, 1.0));
    for (std::size_t e = 1; e <= 100; ++e) CHECK(loss::eta(e, 100, 2.0) < loss::eta(e - 1, 100, 2.0));
    for (double g : {0.5, 1.0, 2.0}) CHECK(loss::eta(30, 100, g) < loss::eta(30, 100, g * 2));
    CHECK_THROWS_AS(loss::eta(101, 100, 2.0), ContractError);
}

TEST_CASE("branch and total loss") {
    std::mt19937_64 rng(6);
    const std::vector<std::size_t> l{0, 1, 2, 3};
    ad::Tape t;
    auto logits = t.constant(randn({4, 4}, rng));
    auto w_rand = t.constant(randn({4, 6}, rng));
    auto w_etf = t.constant(transpose(etf::make_etf(6, 4, 2).vertices));
    const std::vector<double> ones(4, 1.0), cw{0.4, 0.8, 1.2, 1.6};
    const double ce = value(loss::cross_entropy(logits, l));
    CHECK(value(loss::branch_loss(logits, l, 1.0, cw, w_rand).total) == doctest::Approx(ce).epsilon(1e-15));
    const auto b0 = loss::branch_loss(logits, l, 0.0, cw, w_rand);
    CHECK(value(b0.total) ==
          doctest::Approx(value(loss::reweighted_ce(logits, l, cw)) + value(loss::p2p(w_rand, false))).epsilon(1e-14));
    CHECK(value(loss::branch_loss(logits, l, 0.5, ones, w_etf).total) == doctest::Approx(ce).epsilon(1e-12));

    auto b1 = t.constant(Tensor::scalar(1.25));
    auto b2 = t.constant(Tensor::scalar(0.5));
    auto h = t.constant(Tensor::scalar(-3.0));
    auto p = t.constant(Tensor::scalar(0.2));
    CHECK(value(loss::total_loss(b1, b2, h, p, 0.0)) == 1.75);
    CHECK(value(loss::total_loss(b1, b2, t.constant(Tensor::scalar(-4.0)), t.constant(Tensor::scalar(0.0)), 1.0)) ==
          1.75 - 4.0);
    const double a = 0.7;
    CHECK(value(loss::total_loss(b1, b2, h, p, 2 * a)) - value(loss::total_loss(b1, b2, h, p, a)) ==
          doctest::Approx(a * (-3.0 + 0.2)).epsilon(1e-14));
}

TEST_CASE("loss config validation") {
    loss::LossConfig c;
    c.validate();
    c.gamma = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.t_max = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.class_weights = {1.0, -1.0, 3.0};
    CHECK_THROWS_AS(c.validate(), ContractError);
}
