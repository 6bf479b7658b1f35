#include <doctest.h>

#include <cmath>
#include <random>

#include "allnc/autodiff.hpp"
#include "allnc/errors.hpp"
#include "allnc/gradcheck.hpp"
#include "allnc/tensor.hpp"

using namespace allnc;

namespace {

Tensor randn(Shape shape, std::mt19937_64& rng, double s = 1.0) {
    std::normal_distribution<double> g(0.0, s);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = g(rng);
    return t;
}

double unary_check(ad::Var (*op)(ad::Var), const Tensor& x) {
    const std::vector<Tensor> p{x};
    return grad_check([op](ad::Tape&, std::span<const ad::Var> v) { return ad::sum(ad::mul(op(v[0]), op(v[0]))); }, p)
        .max_rel_error;
}

}  // namespace

TEST_CASE("matmul forward") {
    ad::Tape tape;
    auto i3 = tape.constant(Tensor::identity(3));
    auto a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
    CHECK(ad::matmul(i3, a).value() == a.value());
    auto m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    auto ones = tape.constant(Tensor::matrix({{1}, {1}}));
    CHECK(ad::matmul(m, ones).value() == Tensor::matrix({{3}, {7}}));
    CHECK_THROWS_AS(ad::matmul(a, a), DimensionError);
}

TEST_CASE("matmul gradient of sum is ones * b^T") {
    std::mt19937_64 rng(1);
    const Tensor a = randn({5, 4}, rng), b = randn({4, 3}, rng);
    ad::Tape tape;
    auto va = tape.parameter(a);
    auto vb = tape.constant(b);
    tape.backward(ad::sum(ad::matmul(va, vb)));
    const Tensor expect = matmul(Tensor::matrix(5, 3, 1.0), transpose(b));
    CHECK(max_abs_diff(va.grad(), expect) < 1e-12);
    const std::vector<Tensor> p{a, b};
    CHECK(grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::sum(ad::matmul(v[0], v[1])); }, p)
              .max_rel_error < 1e-9);
}

TEST_CASE("l2_normalize") {
    ad::Tape tape;
    CHECK(max_abs_diff(ad::l2_normalize(tape.constant(Tensor::vector({3, 4}))).value(), Tensor::vector({0.6, 0.8})) <
          1e-15);
    const Tensor e = Tensor::vector({0, 1, 0});
    CHECK(ad::l2_normalize(tape.constant(e)).value() == e);
    CHECK_THROWS_AS(ad::l2_normalize(tape.constant(Tensor::vector({0, 0}))), DegenerateInputError);

    std::mt19937_64 rng(2);
    for (int k = 0; k < 5; ++k) {
        const std::vector<Tensor> p{randn({8}, rng)};
        auto first = [](ad::Tape&, std::span<const ad::Var> v) {
            std::vector<std::size_t> idx{0};
            return ad::sum(ad::pick(ad::reshape(ad::l2_normalize(v[0]), {1, 8}), idx));
        };
        CHECK(grad_check(first, p).max_rel_error < 1e-5);
    }
}

TEST_CASE("stop_gradient") {
    ad::Tape tape;
    const Tensor xv = Tensor::vector({1.5, -2.0, 0.25});
    auto x = tape.parameter(xv);
    auto s = ad::stop_gradient(x);
    CHECK(s.value() == x.value());
    tape.backward(ad::dot(x, s));
    // d/dx [x . sg(x)] = sg(x), not 2x
    CHECK(x.grad() == xv);

    ad::Tape t2;
    auto y = t2.parameter(xv);
    t2.backward(ad::sum_squares(ad::stop_gradient(y)));
    for (double g : y.grad().data()) CHECK(std::signbit(g) == false);
    for (double g : y.grad().data()) CHECK(g == 0.0);
}

TEST_CASE("backward basics and contract") {
    ad::Tape tape;
    const Tensor xv = Tensor::vector({1, -2, 3});
    auto x = tape.parameter(xv);
    tape.backward(ad::sum(x));
    CHECK(x.grad() == Tensor::vector({1, 1, 1}));

    ad::Tape t2;
    auto y = t2.parameter(xv);
    t2.backward(ad::sum_squares(y));
    CHECK(y.grad() == Tensor::vector({2, -4, 6}));

    ad::Tape t3;
    auto z = t3.parameter(xv);
    CHECK_THROWS_AS(t3.backward(ad::scale(z, 2.0)), ContractError);
}

TEST_CASE("value references survive later nodes") {
    ad::Tape tape;
    auto x = tape.constant(Tensor::vector({1.0, 2.0}));
    const Tensor& ref = x.value();
    for (int i = 0; i < 1000; ++i) ad::scale(x, 2.0);
    CHECK(ref == Tensor::vector({1.0, 2.0}));
    CHECK(&ref == &x.value());
}

TEST_CASE("x . sg(x) passes finite differences with the stop held fixed") {
    const std::vector<Tensor> p{Tensor::vector({0.3, -1.2, 2.0})};
    const auto r = grad_check([](ad::Tape&, std::span<const ad::Var> v) { return ad::dot(v[0], ad::stop_gradient(v[0])); }, p);
    CHECK(r.max_rel_error < 1e-9);
    const auto g = analytic_gradients([](ad::Tape&, std::span<const ad::Var> v) { return ad::dot(v[0], ad::stop_gradient(v[0])); }, p);
    CHECK(g[0] == p[0]);
}

TEST_CASE("relu subgradient is zero at the kink") {
    ad::Tape tape;
    auto x = tape.parameter(Tensor::vector({-1.0, 0.0, 2.0}));
    tape.backward(ad::sum(ad::relu(x)));
    CHECK(x.grad() == Tensor::vector({0.0, 0.0, 1.0}));
}

TEST_CASE("elementwise and reduction ops pass finite differences") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 10; ++k) {
        Tensor x = randn({4, 5}, rng);
        // keep relu inputs away from 0
        for (auto& v : x.data()) if (std::abs(v) < 1e-3) v += 0.01;
        CHECK(unary_check(ad::relu, x) < 1e-5);
        CHECK(unary_check(ad::normalize_rows, x) < 1e-5);
        CHECK(unary_check(ad::log_softmax_rows, x) < 1e-5);
        CHECK(unary_check(ad::transpose, x) < 1e-5);

        const std::vector<Tensor> p{x, randn({4, 5}, rng), randn({5}, rng)};
        auto f = [](ad::Tape&, std::span<const ad::Var> v) {
            auto a = ad::add(ad::mul(v[0], v[1]), ad::scale(v[0], 0.3));
            auto b = ad::sub_row(ad::add_row(a, v[2]), ad::mean_rows(v[1]));
            return ad::add(ad::add(ad::frobenius_norm(b), ad::sum(ad::rowwise_dot(b, v[0]))),
                           ad::add(ad::mean(ad::sub(b, v[1])), ad::dot(v[2], ad::mean_rows(b))));
        };
        CHECK(grad_check(f, p).max_rel_error < 1e-5);
    }
}

TEST_CASE("log_softmax is stable at large logits") {
    ad::Tape tape;
    auto x = tape.constant(Tensor::matrix({{1000.0, 0.0, -1000.0}}));
    const Tensor ls = ad::log_softmax_rows(x).value();
    CHECK(ls.all_finite());
    CHECK(std::abs(ls(0, 0)) < 1e-12);
}

TEST_CASE("grad_check on a quadratic form is exact") {
    std::mt19937_64 rng(4);
    const Tensor a = randn({6, 6}, rng);
    const std::vector<Tensor> p{randn({1, 6}, rng)};
    auto f = [&a](ad::Tape& t, std::span<const ad::Var> v) {
        return ad::sum(ad::mul(ad::matmul(v[0], t.constant(a)), v[0]));
    };
    CHECK(grad_check(f, p).max_rel_error < 1e-9);
}

TEST_CASE("grad_check reports non-finite evaluations") {
    const std::vector<Tensor> p{Tensor::vector({0.0, 0.0})};
    auto f = [](ad::Tape& t, std::span<const ad::Var> v) {
        return t.push(Tensor::scalar(std::nan("")), {v[0]}, nullptr);
    };
    CHECK_THROWS_AS(grad_check(f, p), EvaluationError);
}

TEST_CASE("graph evaluation is deterministic") {
    auto run = [] {
        std::mt19937_64 rng(9);
        ad::Tape tape;
        auto x = tape.parameter(randn({8, 8}, rng));
        auto y = ad::normalize_rows(ad::matmul(x, ad::transpose(x)));
        tape.backward(ad::sum(ad::log_softmax_rows(y)));
        return std::pair{y.value(), x.grad()};
    };
    CHECK(run() == run());
}
